"""Exhaustive criteria-subset search ranked by rank correlation with labels.

Every non-empty subset of the registry becomes one composite retrieval query;
each document's cosine similarity to that query is correlated against the
binary rigour labels with tie-corrected Kendall tau. The subsets with the
highest significant correlation are the salient criteria sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .corpus import Corpus, RigourLabel
from .criteria import CriteriaRegistry
from .embed import EmbeddingVector, as_embedder, cosine_similarity
from .errors import DegenerateInput, DimensionMismatch, RegistryTooLarge

RETRIEVAL_INSTRUCTION = (
    "Given the following definitions, retrieve the appropriate document "
    "that contains the following criteria:"
)

MODE_APPENDED = "appended"
MODE_SUMMED = "summed_individual"

MAX_REGISTRY_BITS = 24


@dataclass(frozen=True)
class CriteriaSet:
    bitmask: int
    registry_hash: str

    def __post_init__(self):
        if self.bitmask <= 0:
            raise ValueError("criteria set must be non-empty")

    @property
    def size(self) -> int:
        return bin(self.bitmask).count("1")

    def indices(self) -> list[int]:
        return [i for i in range(self.bitmask.bit_length()) if self.bitmask >> i & 1]

    def names(self, registry: CriteriaRegistry) -> list[str]:
        self.validate(registry)
        return [registry.criteria[i].name for i in self.indices()]

    def validate(self, registry: CriteriaRegistry) -> None:
        if self.registry_hash != registry.ordering_hash():
            raise ValueError("criteria set was built against a different registry ordering")
        if self.bitmask >= 1 << len(registry):
            raise ValueError("bitmask wider than the registry")

    def _check_peer(self, other: "CriteriaSet") -> None:
        if self.registry_hash != other.registry_hash:
            raise ValueError("criteria sets bound to different registries")

    def __or__(self, other: "CriteriaSet") -> "CriteriaSet":
        self._check_peer(other)
        return CriteriaSet(self.bitmask | other.bitmask, self.registry_hash)

    def __and__(self, other: "CriteriaSet") -> "CriteriaSet":
        self._check_peer(other)
        return CriteriaSet(self.bitmask & other.bitmask, self.registry_hash)

    @classmethod
    def from_names(cls, registry: CriteriaRegistry, names: Sequence[str]) -> "CriteriaSet":
        position = {name: i for i, name in enumerate(registry.names())}
        mask = 0
        for name in names:
            if name not in position:
                raise KeyError(name)
            mask |= 1 << position[name]
        return cls(mask, registry.ordering_hash())


def enumerate_criteria_sets(registry: CriteriaRegistry) -> Iterator[CriteriaSet]:
    """Every non-empty subset exactly once, in ascending bitmask order."""
    n = len(registry)
    if n < 1 or n > MAX_REGISTRY_BITS:
        raise RegistryTooLarge(f"registry size {n} outside [1, {MAX_REGISTRY_BITS}]")
    registry_hash = registry.ordering_hash()
    for mask in range(1, 1 << n):
        yield CriteriaSet(mask, registry_hash)


def build_query(criteria_set: CriteriaSet, registry: CriteriaRegistry) -> tuple[str, str]:
    """(instruction, query): definitions rendered in registry order as
    'Name: Definition' blocks joined by blank lines."""
    criteria_set.validate(registry)
    blocks = [
        f"{registry.criteria[i].name}: {registry.criteria[i].definition}"
        for i in criteria_set.indices()
    ]
    return RETRIEVAL_INSTRUCTION, "\n\n".join(blocks)


def score_documents(
    criteria_set: CriteriaSet,
    doc_embeddings: Sequence[EmbeddingVector],
    registry: CriteriaRegistry,
    embedder,
    mode: str = MODE_APPENDED,
) -> list[float]:
    """Per-document similarity to the criteria set.

    Appended mode embeds one composite query; summed mode adds up the
    similarities of the singleton queries of each included criterion.
    """
    embedder = as_embedder(embedder)
    dims = {e.dim for e in doc_embeddings}
    if len(dims) > 1:
        raise DimensionMismatch(f"document embeddings have mixed dimensions {sorted(dims)}")
    if mode == MODE_APPENDED:
        instruction, query = build_query(criteria_set, registry)
        query_vec = embedder.embed_query(instruction, query)
        return [cosine_similarity(query_vec, doc) for doc in doc_embeddings]
    if mode == MODE_SUMMED:
        totals = [0.0] * len(doc_embeddings)
        for index in criteria_set.indices():
            singleton = CriteriaSet(1 << index, criteria_set.registry_hash)
            instruction, query = build_query(singleton, registry)
            query_vec = embedder.embed_query(instruction, query)
            for i, doc in enumerate(doc_embeddings):
                totals[i] += cosine_similarity(query_vec, doc)
        return totals
    raise ValueError(f"unknown scoring mode {mode!r}")


# ---------------------------------------------------------------------------
# Kendall's tau-b
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KendallResult:
    tau: float
    p_value: float
    concordant: int
    discordant: int
    method: str


def _tie_pair_count(values: np.ndarray) -> int:
    _, counts = np.unique(values, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _tie_group_sizes(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(values, return_counts=True)
    return counts[counts > 1]


def _asymptotic_p(s: int, y: np.ndarray, scores: np.ndarray) -> float:
    n = len(y)
    t = _tie_group_sizes(y).astype(np.float64)
    u = _tie_group_sizes(scores).astype(np.float64)
    v0 = n * (n - 1) * (2 * n + 5)
    vt = float((t * (t - 1) * (2 * t + 5)).sum())
    vu = float((u * (u - 1) * (2 * u + 5)).sum())
    t1 = float((t * (t - 1)).sum())
    u1 = float((u * (u - 1)).sum())
    t2 = float((t * (t - 1) * (t - 2)).sum())
    u2 = float((u * (u - 1) * (u - 2)).sum())
    var = (v0 - vt - vu) / 18.0
    if t1 and u1:
        var += t1 * u1 / (2.0 * n * (n - 1))
    if t2 and u2:
        var += t2 * u2 / (9.0 * n * (n - 1) * (n - 2))
    if var <= 0:
        raise DegenerateInput("null variance of the Kendall statistic is not positive")
    z = s / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))


def _exact_p(s_observed: int, y: np.ndarray, scores: np.ndarray) -> float:
    """Two-sided permutation p over all placements of the positive labels."""
    n = len(y)
    k = int(y.sum())
    greater = scores[:, None] > scores[None, :]
    less = scores[:, None] < scores[None, :]
    at_least = 0
    total = 0
    for positives in combinations(range(n), k):
        pos = list(positives)
        neg_mask = np.ones(n, dtype=bool)
        neg_mask[pos] = False
        neg = np.flatnonzero(neg_mask)
        s = int(greater[np.ix_(pos, neg)].sum()) - int(less[np.ix_(pos, neg)].sum())
        total += 1
        if abs(s) >= abs(s_observed):
            at_least += 1
    return at_least / total


def kendall_tau(
    labels: Sequence[RigourLabel],
    scores,
    method: str = "auto",
    exact_limit: int = 12,
) -> KendallResult:
    """Tie-corrected tau-b between binary labels (4* encoded 1) and scores.

    The two-sided p-value is an exact label-permutation probability for small
    samples and a tie-corrected normal approximation otherwise.
    """
    y = np.array(
        [1 if lab is RigourLabel.FOUR_STAR else 0 for lab in labels], dtype=np.int64
    )
    scores = np.asarray(scores, dtype=np.float64)
    n = len(y)
    if n < 2 or n != len(scores):
        raise ValueError("need at least two aligned (label, score) pairs")
    k = int(y.sum())
    if k == 0 or k == n:
        raise DegenerateInput("only one label class present")
    if np.all(scores == scores[0]):
        raise DegenerateInput("scores are constant")

    positive_scores = scores[y == 1]
    negative_scores = scores[y == 0]
    concordant = int((positive_scores[:, None] > negative_scores[None, :]).sum())
    discordant = int((positive_scores[:, None] < negative_scores[None, :]).sum())

    n0 = n * (n - 1) // 2
    n1 = _tie_pair_count(y)
    n2 = _tie_pair_count(scores)
    tau = (concordant - discordant) / math.sqrt((n0 - n1) * (n0 - n2))

    if method == "auto":
        method = "exact" if n <= exact_limit else "asymptotic"
    if method == "exact":
        p_value = _exact_p(concordant - discordant, y, scores)
    elif method == "asymptotic":
        p_value = _asymptotic_p(concordant - discordant, y, scores)
    else:
        raise ValueError(f"unknown p-value method {method!r}")
    return KendallResult(
        tau=tau, p_value=p_value, concordant=concordant, discordant=discordant, method=method
    )


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

@dataclass
class SalienceResult:
    criteria_set: CriteriaSet
    tau: float
    p_value: float
    mode: str
    similarities: list[float] | None = None

    def names(self, registry: CriteriaRegistry) -> list[str]:
        return self.criteria_set.names(registry)


@dataclass(frozen=True)
class SeparationStats:
    mean_positive: float
    mean_negative: float
    gap: float
    standardized_gap: float


def class_separation(labels: Sequence[RigourLabel], scores: Sequence[float]) -> SeparationStats:
    """Mean gap between classes, plus the gap in pooled-standard-deviation
    units so differently scaled score modes can be compared."""
    y = np.array([1 if lab is RigourLabel.FOUR_STAR else 0 for lab in labels])
    scores = np.asarray(scores, dtype=np.float64)
    pos, neg = scores[y == 1], scores[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateInput("both classes are required")
    gap = float(pos.mean() - neg.mean())
    df = len(pos) + len(neg) - 2
    pooled_var = ((len(pos) - 1) * pos.var(ddof=1) + (len(neg) - 1) * neg.var(ddof=1)) / df if df > 0 else 0.0
    pooled = math.sqrt(pooled_var)
    standardized = gap / pooled if pooled > 0 else math.nan
    return SeparationStats(
        mean_positive=float(pos.mean()),
        mean_negative=float(neg.mean()),
        gap=gap,
        standardized_gap=standardized,
    )


def search_salient_sets(
    corpus: Corpus,
    registry: CriteriaRegistry,
    embedder,
    mode: str = MODE_APPENDED,
    top_m: int = 20,
    p_threshold: float | None = 1e-4,
    doc_embeddings: Sequence[EmbeddingVector] | None = None,
) -> list[SalienceResult]:
    """Evaluate every enumerated subset and rank by tau.

    Ties prefer smaller sets, then lower bitmasks. Sets failing the
    significance threshold (or with degenerate scores) are excluded. The
    returned results carry the per-document similarities of the top sets.
    """
    embedder = as_embedder(embedder)
    labels = corpus.labels()
    if any(label is None for label in labels):
        raise ValueError("salience search needs a fully labeled corpus")
    if doc_embeddings is None:
        doc_embeddings = [embedder.embed_document(d.text) for d in corpus.documents]

    evaluated: list[tuple[float, int, int, float]] = []
    for criteria_set in enumerate_criteria_sets(registry):
        sims = score_documents(criteria_set, doc_embeddings, registry, embedder, mode)
        try:
            result = kendall_tau(labels, sims)
        except DegenerateInput:
            continue
        if p_threshold is not None and result.p_value >= p_threshold:
            continue
        evaluated.append((result.tau, criteria_set.size, criteria_set.bitmask, result.p_value))

    evaluated.sort(key=lambda row: (-row[0], row[1], row[2]))
    registry_hash = registry.ordering_hash()
    results = []
    for tau, _, bitmask, p_value in evaluated[:top_m]:
        criteria_set = CriteriaSet(bitmask, registry_hash)
        sims = score_documents(criteria_set, doc_embeddings, registry, embedder, mode)
        results.append(
            SalienceResult(
                criteria_set=criteria_set,
                tau=tau,
                p_value=p_value,
                mode=mode,
                similarities=sims,
            )
        )
    return results


def greedy_forward_selection(
    corpus: Corpus,
    registry: CriteriaRegistry,
    embedder,
    mode: str = MODE_APPENDED,
    doc_embeddings: Sequence[EmbeddingVector] | None = None,
) -> SalienceResult:
    """Heuristic alternative for large registries: grow the set one criterion
    at a time while tau improves. Not equivalent to the exhaustive search."""
    embedder = as_embedder(embedder)
    labels = corpus.labels()
    if doc_embeddings is None:
        doc_embeddings = [embedder.embed_document(d.text) for d in corpus.documents]
    registry_hash = registry.ordering_hash()

    best_mask = 0
    best: KendallResult | None = None
    while True:
        improved = None
        for i in range(len(registry)):
            if best_mask >> i & 1:
                continue
            candidate = CriteriaSet(best_mask | (1 << i), registry_hash)
            sims = score_documents(candidate, doc_embeddings, registry, embedder, mode)
            try:
                result = kendall_tau(labels, sims)
            except DegenerateInput:
                continue
            if best is None or result.tau > best.tau + 1e-12:
                if improved is None or result.tau > improved[1].tau:
                    improved = (candidate.bitmask, result)
        if improved is None:
            break
        best_mask, best = improved
    if best is None:
        raise DegenerateInput("no criterion produced a usable correlation")
    final_set = CriteriaSet(best_mask, registry_hash)
    sims = score_documents(final_set, doc_embeddings, registry, embedder, mode)
    return SalienceResult(
        criteria_set=final_set, tau=best.tau, p_value=best.p_value, mode=mode, similarities=sims
    )
