"""Sentence-level certainty analysis.

Each sentence is assigned its most similar rigour criterion (singleton
instruction-conditioned query vs. sentence embedding) and dropped when no
similarity reaches the threshold. Surviving sentences are joined with
externally produced certainty-aspect probabilities, and for every
(criterion, aspect, polarity) cell we report 100x the difference between the
4* and non-4* mean probabilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import RigourLabel, Sentence
from .criteria import CriteriaRegistry
from .embed import as_embedder, post_json
from .errors import MissingPrediction, ProviderError
from .salience import CriteriaSet, build_query

ASPECTS = ("framing", "suggestion", "extent", "condition", "probability", "number")
POLARITIES = ("certain", "uncertain")
PROB_KEYS = tuple(f"{aspect}_{polarity}" for aspect in ASPECTS for polarity in POLARITIES)

DEFAULT_SIMILARITY_THRESHOLD = 0.5


@dataclass(frozen=True)
class SentenceLabel:
    sentence: Sentence
    criterion: str
    similarity: float
    doc_label: RigourLabel


@dataclass(frozen=True)
class CertaintyPrediction:
    doc_id: str
    index: int
    probs: Mapping[str, float]

    def __post_init__(self):
        missing = [k for k in PROB_KEYS if k not in self.probs]
        if missing:
            raise ValueError(f"prediction for ({self.doc_id}, {self.index}) missing {missing}")
        bad = {k: v for k, v in self.probs.items() if not 0.0 <= v <= 1.0}
        if bad:
            raise ValueError(f"probabilities outside [0, 1]: {bad}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.index)


def label_sentences(
    sentences: Sequence[Sentence],
    registry: CriteriaRegistry,
    embedder,
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
    doc_labels: Mapping[str, RigourLabel] | None = None,
) -> list[SentenceLabel]:
    """Assign each sentence its argmax-similarity criterion; sentences whose
    best similarity falls below the threshold are dropped. Ties resolve to
    the earlier registry position."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    if len(registry) == 0:
        raise ValueError("registry must be nonempty")
    doc_labels = doc_labels or {}
    embedder = as_embedder(embedder)

    registry_hash = registry.ordering_hash()
    criterion_vecs = []
    for i, criterion in enumerate(registry):
        instruction, query = build_query(CriteriaSet(1 << i, registry_hash), registry)
        criterion_vecs.append((criterion.name, embedder.embed_query(instruction, query)))

    from .embed import cosine_similarity

    labels: list[SentenceLabel] = []
    for sentence in sentences:
        sentence_vec = embedder.embed_document(sentence.text)
        best_name, best_sim = None, -2.0
        for name, vec in criterion_vecs:
            sim = cosine_similarity(vec, sentence_vec)
            if sim > best_sim:
                best_name, best_sim = name, sim
        if best_sim < threshold:
            continue
        doc_label = doc_labels.get(sentence.doc_id)
        if doc_label is None:
            raise ValueError(f"no rigour label for document {sentence.doc_id!r}")
        labels.append(
            SentenceLabel(
                sentence=sentence, criterion=best_name, similarity=best_sim, doc_label=doc_label
            )
        )
    return labels


# ---------------------------------------------------------------------------
# Prediction providers
# ---------------------------------------------------------------------------

def load_certainty_predictions(path: str | Path) -> list[CertaintyPrediction]:
    """JSONL, one object per sentence: {"doc_id", "index", "probs": {...}}."""
    predictions = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            predictions.append(
                CertaintyPrediction(
                    doc_id=record["doc_id"], index=int(record["index"]), probs=record["probs"]
                )
            )
    return predictions


def save_certainty_predictions(predictions: Iterable[CertaintyPrediction], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for p in predictions:
            record = {"doc_id": p.doc_id, "index": p.index, "probs": {k: p.probs[k] for k in PROB_KEYS}}
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


class MockCertaintyProvider:
    """Deterministic pseudo-probabilities derived from the sentence text."""

    provider_id = "mock-certainty"

    def predict(self, sentences: Sequence[Sentence]) -> list[CertaintyPrediction]:
        import hashlib

        out = []
        for sentence in sentences:
            probs = {}
            for key in PROB_KEYS:
                digest = hashlib.sha256(f"{key}\x00{sentence.text}".encode("utf-8")).digest()
                probs[key] = int.from_bytes(digest[:4], "big") / 2**32
            out.append(CertaintyPrediction(doc_id=sentence.doc_id, index=sentence.index, probs=probs))
        return out


class HttpCertaintyProvider:
    """Classification endpoint with the same 12-cell output as the JSONL file.

    POST {"sentences": [{"doc_id", "index", "text"}]} ->
    {"predictions": [{"doc_id", "index", "probs": {...}}]}.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
    ):
        self.base_url = base_url
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base

    provider_id = "http-certainty"

    def predict(self, sentences: Sequence[Sentence]) -> list[CertaintyPrediction]:
        payload = {
            "sentences": [
                {"doc_id": s.doc_id, "index": s.index, "text": s.text} for s in sentences
            ]
        }
        body = post_json(
            self.base_url,
            payload,
            api_key=self.api_key,
            timeout=self.timeout,
            max_retries=self.max_retries,
            backoff_base=self.backoff_base,
        )
        try:
            return [
                CertaintyPrediction(
                    doc_id=item["doc_id"], index=int(item["index"]), probs=item["probs"]
                )
                for item in body["predictions"]
            ]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"malformed certainty response: {exc}") from exc


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertaintyCell:
    criterion: str
    aspect: str
    polarity: str
    diff: float | None
    n_four_star: int
    n_non_four_star: int

    @property
    def missing_class(self) -> str | None:
        if self.n_four_star == 0:
            return RigourLabel.FOUR_STAR.value
        if self.n_non_four_star == 0:
            return RigourLabel.NON_FOUR_STAR.value
        return None


@dataclass
class CertaintyBreakdown:
    cells: list[CertaintyCell]
    sentence_counts: dict[str, int] = field(default_factory=dict)

    def cell(self, criterion: str, aspect: str, polarity: str) -> CertaintyCell:
        for c in self.cells:
            if (c.criterion, c.aspect, c.polarity) == (criterion, aspect, polarity):
                return c
        raise KeyError((criterion, aspect, polarity))

    def criteria(self) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if c.criterion not in seen:
                seen.append(c.criterion)
        return seen

    def grid(self, polarity: str) -> dict[str, dict[str, float | None]]:
        out: dict[str, dict[str, float | None]] = {}
        for c in self.cells:
            if c.polarity == polarity:
                out.setdefault(c.criterion, {})[c.aspect] = c.diff
        return out


def aggregate_certainty(
    labels: Sequence[SentenceLabel],
    predictions: Sequence[CertaintyPrediction],
) -> CertaintyBreakdown:
    """100 x (mean 4* probability - mean non-4* probability) per cell.

    Positive values lean 4*, negative lean non-4*. Cells where one class has
    no sentences carry diff=None rather than a zero fill.
    """
    by_key = {p.key: p for p in predictions}
    grouped: dict[str, dict[RigourLabel, list[CertaintyPrediction]]] = {}
    counts: dict[str, int] = {}
    for label in labels:
        prediction = by_key.get(label.sentence.key)
        if prediction is None:
            raise MissingPrediction(label.sentence.key)
        grouped.setdefault(label.criterion, {}).setdefault(label.doc_label, []).append(prediction)
        counts[label.criterion] = counts.get(label.criterion, 0) + 1

    cells = []
    for criterion in sorted(grouped):
        pos = grouped[criterion].get(RigourLabel.FOUR_STAR, [])
        neg = grouped[criterion].get(RigourLabel.NON_FOUR_STAR, [])
        for aspect in ASPECTS:
            for polarity in POLARITIES:
                key = f"{aspect}_{polarity}"
                diff = None
                if pos and neg:
                    mean_pos = sum(p.probs[key] for p in pos) / len(pos)
                    mean_neg = sum(p.probs[key] for p in neg) / len(neg)
                    diff = 100.0 * (mean_pos - mean_neg)
                cells.append(
                    CertaintyCell(
                        criterion=criterion,
                        aspect=aspect,
                        polarity=polarity,
                        diff=diff,
                        n_four_star=len(pos),
                        n_non_four_star=len(neg),
                    )
                )
    return CertaintyBreakdown(cells=cells, sentence_counts=counts)


def intersect_criteria(*criterion_sets: Iterable[str]) -> list[str]:
    """Criteria present in every run, preserving first-run order."""
    sets = [list(s) for s in criterion_sets]
    if not sets:
        return []
    common = set(sets[0])
    for s in sets[1:]:
        common &= set(s)
    return [name for name in sets[0] if name in common]


def filter_labels_to_criteria(
    labels: Sequence[SentenceLabel], criteria: Iterable[str]
) -> list[SentenceLabel]:
    wanted = set(criteria)
    return [label for label in labels if label.criterion in wanted]
