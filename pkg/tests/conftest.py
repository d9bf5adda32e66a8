import pytest

from rigourkit.embed import Embedder, MockEmbeddingProvider
from rigourkit.synthetic import FIXTURE_DIM, keyword_fixture, salience_fixture


@pytest.fixture()
def mock_provider():
    return MockEmbeddingProvider(dim=256)


@pytest.fixture()
def embedder(mock_provider):
    return Embedder(mock_provider)


@pytest.fixture(scope="session")
def planted_fixture():
    return salience_fixture()


@pytest.fixture(scope="session")
def planted_embeddings(planted_fixture):
    embedder = Embedder(MockEmbeddingProvider(dim=FIXTURE_DIM))
    docs = [embedder.embed_document(d.text) for d in planted_fixture.corpus.documents]
    return embedder, docs


@pytest.fixture(scope="session")
def keyword_corpus():
    return keyword_fixture()
