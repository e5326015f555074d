"""Allow `python -m simsurp ...` as an alias for the console script."""

import sys

from simsurp.cli import main

if __name__ == "__main__":
    sys.exit(main())
