import pytest

from lmexport import build_fixture_model, fixture_documents


@pytest.fixture(scope="session")
def model():
    return build_fixture_model(seed=0)


@pytest.fixture(scope="session")
def docs():
    return fixture_documents(seed=0, n_docs=2, words_per_doc=10)
