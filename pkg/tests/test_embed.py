import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from rigourkit.embed import (
    Embedder,
    EmbeddingCache,
    EmbeddingRequest,
    EmbeddingVector,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    cache_key,
    cosine_similarity,
    embed_document,
    embed_query,
    tokenize,
)
from rigourkit.errors import DimensionMismatch, ProviderError, ZeroVector


# ---------------------------------------------------------------------------
# cosine similarity
# ---------------------------------------------------------------------------

def test_cosine_identical_vectors():
    v = EmbeddingVector(np.array([1.0, 2.0, 3.0]))
    assert cosine_similarity(v, v) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_direct_arithmetic():
    a = np.array([1.0, 2.0, 2.0])
    b = np.array([2.0, 1.0, 2.0])
    assert cosine_similarity(a, b) == pytest.approx(8.0 / 9.0, abs=1e-15)


def test_cosine_scale_invariance():
    rng = np.random.RandomState(1)
    for _ in range(50):
        a = rng.randn(16)
        b = rng.randn(16)
        alpha, beta = rng.uniform(0.1, 10, size=2)
        assert cosine_similarity(a, b) == pytest.approx(
            cosine_similarity(alpha * a, beta * b), abs=1e-9
        )


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine_similarity(np.ones(3), np.ones(4))
    with pytest.raises(ZeroVector):
        cosine_similarity(np.zeros(3), np.ones(3))


# ---------------------------------------------------------------------------
# the mock's pooling contract
# ---------------------------------------------------------------------------

def test_query_is_mean_of_onehots_plus_offset():
    provider = MockEmbeddingProvider(dim=64)
    instruction = "find things"
    vec = embed_query(instruction, "a b", provider)
    expected = (provider.token_vector("a") + provider.token_vector("b")) / 2
    expected = expected + provider.instruction_offset(instruction)
    assert np.array_equal(vec.values, expected)


def test_single_token_query_mean_of_one():
    provider = MockEmbeddingProvider(dim=64)
    vec = embed_query("inst", "a", provider)
    expected = provider.token_vector("a") + provider.instruction_offset("inst")
    assert np.array_equal(vec.values, expected)


def test_query_pooling_matches_bruteforce_on_random_texts():
    provider = MockEmbeddingProvider(dim=128)
    rng = random.Random(11)
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
    for _ in range(100):
        text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 30)))
        instruction = rng.choice(["find x", "retrieve y", ""])
        got = embed_query(instruction, text, provider)
        tokens = provider.tokenize(text)
        total = np.zeros(provider.dim)
        for token in tokens:
            total += provider.token_vector(token) + provider.instruction_offset(instruction)
        assert np.array_equal(got.values, total / len(tokens))


def test_document_pooling_weighted_by_occurrence():
    provider = MockEmbeddingProvider(dim=64)
    vec = embed_document("a a b", provider)
    expected = (2 * provider.token_vector("a") + provider.token_vector("b")) / 3
    assert np.array_equal(vec.values, expected)


def test_document_pooling_matches_bruteforce_on_random_texts():
    provider = MockEmbeddingProvider(dim=128)
    rng = random.Random(13)
    words = ["red", "green", "blue", "cyan", "teal", "pink"]
    for _ in range(100):
        text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 40)))
        got = embed_document(text, provider)
        tokens = provider.tokenize(text)
        total = np.zeros(provider.dim)
        for token in tokens:
            total += provider.token_vector(token)
        assert np.array_equal(got.values, total / len(tokens))


def test_chunked_document_equals_global_token_mean():
    provider = MockEmbeddingProvider(dim=64, max_tokens=7)
    text = "Alpha beta gamma delta. Epsilon zeta eta theta. Iota kappa lam mu nu."
    got = embed_document(text, provider)
    tokens = tokenize(text)
    total = np.zeros(provider.dim)
    for token in tokens:
        total += provider.token_vector(token)
    assert got.provenance.pooling == "token_mean_chunked"
    assert np.array_equal(got.values, total / len(tokens))


def test_document_mode_never_sends_instruction():
    provider = MockEmbeddingProvider(dim=32)
    embed_document("some text here", provider)
    embed_query("instruction", "query text", provider)
    doc_calls = [c for c in provider.calls if c[0] == "some text here"]
    query_calls = [c for c in provider.calls if c[0] == "query text"]
    assert doc_calls == [("some text here", None)]
    assert query_calls == [("query text", "instruction")]


def test_empty_inputs_rejected():
    provider = MockEmbeddingProvider(dim=16)
    with pytest.raises(ValueError):
        embed_document("   ", provider)
    with pytest.raises(ValueError):
        embed_document("?!...", provider)
    with pytest.raises(ValueError):
        embed_query("inst", "", provider)


def test_request_type_forbids_instruction_in_document_mode():
    with pytest.raises(ValueError):
        EmbeddingRequest(text="x", mode="document", instruction="nope")
    EmbeddingRequest(text="x", mode="query", instruction="fine")


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def test_cache_roundtrip_and_transparency(tmp_path):
    provider = MockEmbeddingProvider(dim=32)
    cache_path = tmp_path / "vectors.jsonl"
    embedder = Embedder(provider, EmbeddingCache(cache_path))
    fresh = embedder.embed_document("solar panels work")
    calls_before = len(provider.calls)
    cached = embedder.embed_document("solar panels work")
    assert len(provider.calls) == calls_before
    assert np.array_equal(fresh.values, cached.values)

    # a new embedder over the same file sees the same vector without a call
    embedder2 = Embedder(MockEmbeddingProvider(dim=32), EmbeddingCache(cache_path))
    reloaded = embedder2.embed_document("solar panels work")
    assert np.array_equal(reloaded.values, fresh.values)
    assert embedder2.provider.calls == []


def test_cache_key_separates_modes_and_instructions():
    keys = {
        cache_key("p", "query", "a", "text"),
        cache_key("p", "query", "b", "text"),
        cache_key("p", "document", None, "text"),
        cache_key("q", "document", None, "text"),
        cache_key("p", "document", None, "other"),
    }
    assert len(keys) == 5


def test_cache_file_format(tmp_path):
    cache_path = tmp_path / "vectors.jsonl"
    cache = EmbeddingCache(cache_path)
    cache.put("abc123", np.array([1.0, 2.0]))
    record = json.loads(cache_path.read_text().strip())
    assert record == {"key": "abc123", "dim": 2, "values": [1.0, 2.0]}


# ---------------------------------------------------------------------------
# HTTP wire contract
# ---------------------------------------------------------------------------

class _EmbeddingsHandler(BaseHTTPRequestHandler):
    requests: list = []
    fail_first = 0

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests.append((dict(self.headers), body))
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        vectors = []
        for text in body["input"]:
            vec = [float(len(text)), float(len(body.get("instruction") or ""))]
            vectors.append({"embedding": vec})
        payload = json.dumps({"data": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def embeddings_server():
    _EmbeddingsHandler.requests = []
    _EmbeddingsHandler.fail_first = 0
    server = HTTPServer(("127.0.0.1", 0), _EmbeddingsHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _EmbeddingsHandler
    server.shutdown()


def test_http_provider_wire_shape(embeddings_server):
    url, handler = embeddings_server
    provider = HttpEmbeddingProvider(url, model="embedder-1", api_key="sekret", backoff_base=0.0)
    vec = embed_query("find docs", "short query", provider)
    headers, body = handler.requests[0]
    assert headers["Authorization"] == "Bearer sekret"
    assert headers["Content-Type"] == "application/json"
    assert body == {
        "model": "embedder-1",
        "input": ["find docs\nshort query"],
        "instruction": None,
    }
    assert vec.provenance.pooling == "concat_fallback"

    embed_document("plain document", provider)
    _, body = handler.requests[1]
    assert body["instruction"] is None
    assert body["input"] == ["plain document"]


def test_http_provider_instruction_aware_mode(embeddings_server):
    url, handler = embeddings_server
    provider = HttpEmbeddingProvider(
        url, model="embedder-1", instruction_aware=True, backoff_base=0.0
    )
    vec = embed_query("find docs", "short query", provider)
    _, body = handler.requests[0]
    assert body["input"] == ["short query"]
    assert body["instruction"] == "find docs"
    assert vec.provenance.pooling == "provider_pooled"


def test_http_provider_retries_then_succeeds(embeddings_server):
    url, handler = embeddings_server
    handler.fail_first = 2
    provider = HttpEmbeddingProvider(url, model="m", max_retries=3, backoff_base=0.0)
    vec = embed_document("retry me", provider)
    assert len(handler.requests) == 3
    assert vec.dim == 2


def test_http_provider_gives_up_after_retries(embeddings_server):
    url, handler = embeddings_server
    handler.fail_first = 10
    provider = HttpEmbeddingProvider(url, model="m", max_retries=2, backoff_base=0.0)
    with pytest.raises(ProviderError):
        embed_document("hopeless", provider)


def test_embed_documents_batches_pooled_provider(embeddings_server):
    url, handler = embeddings_server
    provider = HttpEmbeddingProvider(url, model="m", backoff_base=0.0)
    embedder = Embedder(provider)
    texts = [f"document number {i}" for i in range(5)]
    vectors = embedder.embed_documents(texts, batch_size=2)
    assert len(vectors) == 5
    batch_sizes = [len(body["input"]) for _, body in handler.requests]
    assert batch_sizes == [2, 2, 1]
    # second call is fully cached
    before = len(handler.requests)
    embedder.embed_documents(texts, batch_size=2)
    assert len(handler.requests) == before


def test_embed_documents_threaded_matches_sequential(tmp_path):
    texts = [f"alpha beta {i} gamma" for i in range(12)]
    sequential = Embedder(MockEmbeddingProvider(dim=64)).embed_documents(texts)
    threaded = Embedder(MockEmbeddingProvider(dim=64)).embed_documents(texts, max_workers=4)
    for a, b in zip(sequential, threaded):
        assert np.array_equal(a.values, b.values)
