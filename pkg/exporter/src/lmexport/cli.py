"""Command-line entry points: export, fixture-model, fixture-docs.

``export`` flags mirror ExportConfig one to one.  Errors surface as a
one-line JSON record on stderr with exit status 2.
"""

from __future__ import annotations

import argparse
import json
import sys

from lmexport.export import (
    DEFAULT_SAMPLE_COUNT,
    EMBEDDING_SOURCES,
    MODES,
    ExportConfig,
    export_file,
    fixture_documents,
    write_documents,
)
from lmexport.model import build_fixture_model, save_model


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmexport",
        description="Export interchange corpora from a causal language model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="write a corpus for a documents file")
    p.add_argument("--model", required=True,
                   help="fixture:tiny, fixture:tiny:<seed>, or a saved-model directory")
    p.add_argument("--docs", required=True, help="JSON-lines documents with RTs")
    p.add_argument("--out", required=True, help="corpus output path")
    p.add_argument("--mode", choices=MODES, default="subword")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLE_COUNT,
                   help="alternatives per word in the sampled modes")
    p.add_argument("--embeddings", choices=EMBEDDING_SOURCES, default=None,
                   help="override the mode's default embedding source")
    p.add_argument("--noncontextual-layer", type=int, default=0)
    p.add_argument("--contextual-layer", type=int, default=None,
                   help="default: the model's last layer")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fixture-model", help="build and save a seeded fixture model")
    p.add_argument("--out", required=True, help="model directory to create")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("fixture-docs", help="write synthetic documents with RTs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--docs", type=int, default=2)
    p.add_argument("--words", type=int, default=20)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.seed < 0:
            raise ValueError(f"seed must be >= 0, got {args.seed}")
        if args.command == "export":
            config = ExportConfig(
                model=args.model,
                mode=args.mode,
                sample_count=args.samples,
                embedding_source=args.embeddings,
                noncontextual_layer=args.noncontextual_layer,
                contextual_layer=args.contextual_layer,
                seed=args.seed,
            )
            corpus = export_file(config, args.docs, args.out)
            print(f"wrote {len(corpus)} records to {args.out}")
        elif args.command == "fixture-model":
            save_model(build_fixture_model(seed=args.seed), args.out)
            print(f"wrote model to {args.out}")
        else:
            docs = fixture_documents(seed=args.seed, n_docs=args.docs,
                                     words_per_doc=args.words)
            write_documents(docs, args.out)
            print(f"wrote {len(docs)} documents to {args.out}")
    except Exception as exc:  # noqa: BLE001 - single reporting point
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
