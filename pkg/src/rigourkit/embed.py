"""Instruction-conditioned query embeddings and plain document embeddings.

A query vector is the mean over the query's token embeddings computed in the
context of a prepended instruction; a document vector is the mean over all of
its token embeddings with no instruction. Providers that cannot expose
token-level pooling fall back to embedding the concatenated instruction and
query text, and that degradation is recorded in the vector's provenance.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ProviderError, ZeroVector

MODE_QUERY = "query"
MODE_DOCUMENT = "document"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; the token unit used for mean pooling."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class EmbeddingRequest:
    text: str
    mode: str
    instruction: str | None = None

    def __post_init__(self):
        if self.mode not in (MODE_QUERY, MODE_DOCUMENT):
            raise ValueError(f"unknown embedding mode {self.mode!r}")
        if self.mode == MODE_DOCUMENT and self.instruction is not None:
            raise ValueError("document mode does not take an instruction")


@dataclass(frozen=True)
class Provenance:
    provider_id: str
    mode: str
    instruction: str | None
    pooling: str


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    norm: float = field(default=0.0)
    provenance: Provenance | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "norm", float(np.linalg.norm(values)))

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _as_array(vector) -> np.ndarray:
    if isinstance(vector, EmbeddingVector):
        return vector.values
    return np.asarray(vector, dtype=np.float64)


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|); raises on dimension mismatch or zero-norm input."""
    va, vb = _as_array(a), _as_array(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"dimensions differ: {va.shape} vs {vb.shape}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.dot(va, vb) / (norm_a * norm_b))


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

class MockEmbeddingProvider:
    """Deterministic token-level provider for tests and offline runs.

    Each token embeds to a one-hot axis chosen by hashing the token; an
    instruction shifts every conditioned token embedding by a constant
    one-hot offset vector derived from the instruction text. Token values
    are small integers and the offset is dyadic, so mean pooling is exact
    in floating point.
    """

    supports_token_pooling = True

    def __init__(self, dim: int = 512, offset_scale: float = 0.125, max_tokens: int | None = None):
        self.dim = dim
        self.offset_scale = offset_scale
        self.max_tokens = max_tokens
        self.calls: list[tuple[str, str | None]] = []

    @property
    def provider_id(self) -> str:
        return f"mock-onehot-{self.dim}"

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text)

    def _axis(self, key: str) -> int:
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def token_vector(self, token: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        vec[self._axis("tok:" + token)] = 1.0
        return vec

    def instruction_offset(self, instruction: str | None) -> np.ndarray:
        vec = np.zeros(self.dim)
        if instruction:
            vec[self._axis("ins:" + instruction)] = self.offset_scale
        return vec

    def token_matrix(self, text: str, instruction: str | None) -> np.ndarray:
        """Per-token embeddings of `text` conditioned on the instruction."""
        self.calls.append((text, instruction))
        tokens = self.tokenize(text)
        matrix = np.zeros((len(tokens), self.dim))
        for row, token in enumerate(tokens):
            matrix[row, self._axis("tok:" + token)] += 1.0
        matrix += self.instruction_offset(instruction)
        return matrix


class HttpEmbeddingProvider:
    """Pooled embeddings over HTTP.

    Wire contract: POST to the endpoint with
    ``{"model": str, "input": [str], "instruction": str|null}`` and read
    ``{"data": [{"embedding": [float]}]}`` back. Instruction-naive backends
    get the concatenated instruction and query as a single input instead.
    """

    supports_token_pooling = False

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        instruction_aware: bool = False,
        max_tokens: int | None = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
    ):
        self.base_url = base_url
        self.model = model
        self.api_key = api_key
        self.instruction_aware = instruction_aware
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base

    @property
    def provider_id(self) -> str:
        return f"http:{self.model}"

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text)

    def embed_batch(self, texts: list[str], instruction: str | None) -> list[np.ndarray]:
        payload = {"model": self.model, "input": list(texts), "instruction": instruction}
        body = post_json(
            self.base_url,
            payload,
            api_key=self.api_key,
            timeout=self.timeout,
            max_retries=self.max_retries,
            backoff_base=self.backoff_base,
        )
        try:
            vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in body["data"]]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        dims = {v.shape[0] for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"provider returned mixed dimensions {sorted(dims)}")
        return vectors


def post_json(
    url: str,
    payload: dict,
    api_key: str | None = None,
    timeout: float = 30.0,
    max_retries: int = 3,
    backoff_base: float = 0.5,
) -> dict:
    """POST JSON with exponential backoff on transient failures."""
    data = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error: Exception | None = None
    for attempt in range(max_retries + 1):
        request = urllib.request.Request(url, data=data, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=timeout) as response:
                return json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            last_error = exc
            if exc.code < 500:
                raise ProviderError(f"provider rejected request: HTTP {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            last_error = exc
        if attempt < max_retries:
            time.sleep(backoff_base * (2**attempt))
    raise ProviderError(f"provider unreachable after {max_retries + 1} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Pooling operations
# ---------------------------------------------------------------------------

def _chunk_by_sentences(text: str, provider, limit: int) -> list[str]:
    from .corpus import segment_sentences  # sentence-boundary chunking

    chunks: list[str] = []
    current: list[str] = []
    current_tokens = 0
    for sentence in segment_sentences(text):
        n = len(provider.tokenize(sentence.text))
        if current and current_tokens + n > limit:
            chunks.append(" ".join(current))
            current, current_tokens = [], 0
        current.append(sentence.text)
        current_tokens += n
    if current:
        chunks.append(" ".join(current))
    return chunks


def embed_query(instruction: str, query: str, provider) -> EmbeddingVector:
    """Mean pooling over the query tokens, conditioned on the instruction."""
    if not query.strip():
        raise ValueError("query must be nonempty")
    if provider.supports_token_pooling:
        matrix = provider.token_matrix(query, instruction)
        if matrix.shape[0] == 0:
            raise ValueError("query has no tokens")
        values = matrix.sum(axis=0) / matrix.shape[0]
        pooling = "token_mean"
    else:
        combined = f"{instruction}\n{query}" if not provider.instruction_aware else query
        sent_instruction = instruction if provider.instruction_aware else None
        values = provider.embed_batch([combined], instruction=sent_instruction)[0]
        pooling = "provider_pooled" if provider.instruction_aware else "concat_fallback"
    return EmbeddingVector(
        values=values,
        provenance=Provenance(provider.provider_id, MODE_QUERY, instruction, pooling),
    )


def embed_document(text: str, provider) -> EmbeddingVector:
    """Mean pooling over all tokens, no instruction; long texts are chunked
    at sentence boundaries and recombined by token count."""
    if not text.strip():
        raise ValueError("document text must be nonempty")
    limit = getattr(provider, "max_tokens", None)
    n_tokens = len(provider.tokenize(text))
    if n_tokens == 0:
        raise ValueError("document has no tokens")

    if provider.supports_token_pooling:
        if limit is not None and n_tokens > limit:
            total = None
            count = 0
            for chunk in _chunk_by_sentences(text, provider, limit):
                matrix = provider.token_matrix(chunk, None)
                total = matrix.sum(axis=0) if total is None else total + matrix.sum(axis=0)
                count += matrix.shape[0]
            values = total / count
            pooling = "token_mean_chunked"
        else:
            matrix = provider.token_matrix(text, None)
            values = matrix.sum(axis=0) / matrix.shape[0]
            pooling = "token_mean"
    else:
        if limit is not None and n_tokens > limit:
            chunks = _chunk_by_sentences(text, provider, limit)
        else:
            chunks = [text]
        vectors = provider.embed_batch(chunks, instruction=None)
        weights = np.array([len(provider.tokenize(c)) for c in chunks], dtype=np.float64)
        values = (np.stack(vectors) * weights[:, None]).sum(axis=0) / weights.sum()
        pooling = "provider_pooled" if len(chunks) == 1 else "provider_pooled_chunked"
    return EmbeddingVector(
        values=values,
        provenance=Provenance(provider.provider_id, MODE_DOCUMENT, None, pooling),
    )


# ---------------------------------------------------------------------------
# Disk cache and the embedder facade
# ---------------------------------------------------------------------------

def cache_key(provider_id: str, mode: str, instruction: str | None, text: str) -> str:
    blob = "\x00".join([provider_id, mode, instruction or "", text])
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Append-only JSONL store of vectors, keyed by content address.

    One record per line: {"key": hex, "dim": int, "values": [float]}.
    Reads are lock-free on the in-memory map; writes are serialized.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    self._vectors[record["key"]] = np.asarray(record["values"], dtype=np.float64)

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, key: str) -> np.ndarray | None:
        return self._vectors.get(key)

    def put(self, key: str, values: np.ndarray) -> None:
        with self._lock:
            if key in self._vectors:
                return
            self._vectors[key] = values
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                record = {"key": key, "dim": int(values.shape[0]), "values": values.tolist()}
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps(record))
                    handle.write("\n")


def as_embedder(provider_or_embedder) -> "Embedder":
    """Accept either a bare provider or an Embedder and return an Embedder."""
    if isinstance(provider_or_embedder, Embedder):
        return provider_or_embedder
    return Embedder(provider_or_embedder)


class Embedder:
    """Provider plus cache; the object the pipeline passes around."""

    def __init__(self, provider, cache: EmbeddingCache | None = None):
        self.provider = provider
        self.cache = cache if cache is not None else EmbeddingCache()

    @property
    def provider_id(self) -> str:
        return self.provider.provider_id

    def _cached(self, mode: str, instruction: str | None, text: str, compute) -> EmbeddingVector:
        key = cache_key(self.provider.provider_id, mode, instruction, text)
        hit = self.cache.get(key)
        if hit is not None:
            return EmbeddingVector(
                values=hit,
                provenance=Provenance(self.provider.provider_id, mode, instruction, "cache"),
            )
        vector = compute()
        self.cache.put(key, vector.values)
        return vector

    def embed_query(self, instruction: str, query: str) -> EmbeddingVector:
        return self._cached(
            MODE_QUERY, instruction, query, lambda: embed_query(instruction, query, self.provider)
        )

    def embed_document(self, text: str) -> EmbeddingVector:
        return self._cached(
            MODE_DOCUMENT, None, text, lambda: embed_document(text, self.provider)
        )

    def embed_documents(
        self, texts: list[str], batch_size: int = 32, max_workers: int = 1
    ) -> list[EmbeddingVector]:
        """Embed many documents, reusing the cache.

        Pooled providers get uncached short texts grouped into batches of
        ``batch_size`` per request; token-level providers can fan out across
        ``max_workers`` threads (cache writes stay serialized either way).
        """
        results: dict[int, EmbeddingVector] = {}
        pending: list[int] = []
        for i, text in enumerate(texts):
            key = cache_key(self.provider.provider_id, MODE_DOCUMENT, None, text)
            hit = self.cache.get(key)
            if hit is not None:
                results[i] = EmbeddingVector(
                    values=hit,
                    provenance=Provenance(self.provider.provider_id, MODE_DOCUMENT, None, "cache"),
                )
            else:
                pending.append(i)

        if pending and not self.provider.supports_token_pooling:
            limit = getattr(self.provider, "max_tokens", None)
            short = [
                i for i in pending
                if limit is None or len(self.provider.tokenize(texts[i])) <= limit
            ]
            for start in range(0, len(short), batch_size):
                group = short[start : start + batch_size]
                vectors = self.provider.embed_batch([texts[i] for i in group], instruction=None)
                for i, values in zip(group, vectors):
                    vector = EmbeddingVector(
                        values=values,
                        provenance=Provenance(
                            self.provider.provider_id, MODE_DOCUMENT, None, "provider_pooled"
                        ),
                    )
                    key = cache_key(self.provider.provider_id, MODE_DOCUMENT, None, texts[i])
                    self.cache.put(key, vector.values)
                    results[i] = vector
            pending = [i for i in pending if i not in results]

        if pending:
            if max_workers > 1:
                from concurrent.futures import ThreadPoolExecutor

                with ThreadPoolExecutor(max_workers=max_workers) as pool:
                    for i, vector in zip(pending, pool.map(self.embed_document, [texts[i] for i in pending])):
                        results[i] = vector
            else:
                for i in pending:
                    results[i] = self.embed_document(texts[i])
        return [results[i] for i in range(len(texts))]
