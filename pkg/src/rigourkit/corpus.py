"""Corpus ingestion and preprocessing.

Reads paper records (JSONL or one raw text file per paper), extracts the
abstract and introduction sections, strips author/venue boilerplate,
segments text into sentences and produces deterministic stratified splits.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DuplicateId,
    EmptyCorpus,
    InvalidState,
    MalformedRecord,
    MissingRequiredField,
    SectionNotFound,
)

LABEL_POSITIVE = "4*"
LABEL_NEGATIVE = "non-4*"


class RigourLabel(Enum):
    FOUR_STAR = LABEL_POSITIVE
    NON_FOUR_STAR = LABEL_NEGATIVE

    @classmethod
    def parse(cls, raw: str) -> "RigourLabel":
        for member in cls:
            if member.value == raw:
                return member
        raise ValueError(f"unknown rigour label {raw!r}")


class DocState(Enum):
    RAW = "raw"
    STRIPPED = "stripped"
    MASKED = "masked"


# Allowed forward transitions; a document never moves back toward RAW.
_STATE_ORDER = {DocState.RAW: 0, DocState.STRIPPED: 1, DocState.MASKED: 2}


@dataclass(frozen=True)
class Document:
    id: str
    abstract: str
    introduction: str
    label: RigourLabel | None = None
    venue: str | None = None
    year: int | None = None
    state: DocState = DocState.RAW

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be nonempty")

    @property
    def text(self) -> str:
        """Abstract and introduction joined, the unit all downstream stages see."""
        return self.abstract + "\n\n" + self.introduction

    def with_state(self, state: DocState) -> "Document":
        if _STATE_ORDER[state] < _STATE_ORDER[self.state]:
            raise InvalidState(f"cannot move {self.id} from {self.state.value} back to {state.value}")
        return replace(self, state=state)


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    index: int
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("sentence index must be >= 0")
        if not self.text:
            raise ValueError("sentence text must be nonempty")

    @property
    def key(self) -> tuple[str, int]:
        return (self.doc_id, self.index)


@dataclass
class Corpus:
    documents: list[Document]
    splits: dict[str, list[str]] | None = None

    def __post_init__(self):
        seen: set[str] = set()
        for doc in self.documents:
            if doc.id in seen:
                raise DuplicateId(doc.id)
            seen.add(doc.id)
        if self.splits is not None:
            assigned: set[str] = set()
            for name, ids in self.splits.items():
                for doc_id in ids:
                    if doc_id not in seen:
                        raise ValueError(f"split {name!r} references unknown id {doc_id!r}")
                    if doc_id in assigned:
                        raise ValueError(f"id {doc_id!r} assigned to more than one split")
                    assigned.add(doc_id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def labels(self) -> list[RigourLabel | None]:
        return [d.label for d in self.documents]

    def by_id(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise KeyError(doc_id)

    def subset(self, split: str) -> "Corpus":
        if self.splits is None or split not in self.splits:
            raise KeyError(split)
        wanted = set(self.splits[split])
        return Corpus([d for d in self.documents if d.id in wanted])

    def with_labels(self, labels: dict[str, RigourLabel]) -> "Corpus":
        docs = [replace(d, label=labels.get(d.id, d.label)) for d in self.documents]
        return Corpus(docs, splits=self.splits)


# ---------------------------------------------------------------------------
# JSONL ingestion / serialization
# ---------------------------------------------------------------------------

_REQUIRED_FIELDS = ("id", "abstract", "introduction")


def _record_to_document(record: dict, line_number: int) -> Document:
    for name in _REQUIRED_FIELDS:
        if name not in record or record[name] in (None, ""):
            raise MissingRequiredField(name, line_number)
    label = None
    if record.get("label") is not None:
        try:
            label = RigourLabel.parse(record["label"])
        except ValueError as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
    state = DocState.RAW
    if record.get("state") is not None:
        try:
            state = DocState(record["state"])
        except ValueError as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
    year = record.get("year")
    if year is not None and not isinstance(year, int):
        raise MalformedRecord(line_number, f"year must be an integer, got {year!r}")
    return Document(
        id=str(record["id"]),
        abstract=record["abstract"],
        introduction=record["introduction"],
        label=label,
        venue=record.get("venue"),
        year=year,
        state=state,
    )


def ingest_corpus(path: str | Path, format: str = "jsonl") -> Corpus:
    """Read one document per JSONL line, rejecting duplicates and bad records."""
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    path = Path(path)
    documents: list[Document] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_number, exc.msg) from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_number, "record is not a JSON object")
            doc = _record_to_document(record, line_number)
            if doc.id in seen:
                raise DuplicateId(doc.id)
            seen.add(doc.id)
            documents.append(doc)
    return Corpus(documents)


def document_to_record(doc: Document) -> dict:
    """JSONL schema plus a 'state' extension so processing state survives round trips."""
    return {
        "id": doc.id,
        "abstract": doc.abstract,
        "introduction": doc.introduction,
        "label": doc.label.value if doc.label is not None else None,
        "venue": doc.venue,
        "year": doc.year,
        "state": doc.state.value,
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for doc in corpus.documents:
            handle.write(json.dumps(document_to_record(doc), sort_keys=True))
            handle.write("\n")


def ingest_raw_dir(directory: str | Path, config: "SectionConfig | None" = None) -> Corpus:
    """One UTF-8 text file per paper; document id is the filename stem."""
    directory = Path(directory)
    documents = []
    for file in sorted(directory.glob("*.txt")):
        abstract, introduction = extract_sections(file.read_text(encoding="utf-8"), config)
        documents.append(Document(id=file.stem, abstract=abstract, introduction=introduction))
    return Corpus(documents)


# ---------------------------------------------------------------------------
# Section extraction
# ---------------------------------------------------------------------------

@dataclass
class SectionConfig:
    """Heading title patterns, matched case-insensitively against whole lines.

    ``section_patterns`` recognizes generic numbered top-level headings
    ("1 Introduction", "2. Related Work", "II. METHODS"); roman numerals
    require trailing punctuation to avoid treating ordinary prose as a heading.
    """

    abstract_patterns: tuple[str, ...] = (r"abstract[.:]?",)
    introduction_patterns: tuple[str, ...] = (
        r"(?:\d+[.)]?\s+)?introduction[.:]?",
        r"[IVXLCDM]+[.)]\s+introduction[.:]?",
    )
    section_patterns: tuple[str, ...] = (
        r"\d+[.)]?\s+[A-Z].*",
        r"[IVXLCDM]+[.)]\s+\S.*",
    )

    def _match_any(self, line: str, patterns: Iterable[str]) -> bool:
        stripped = line.strip()
        return any(re.fullmatch(p, stripped, flags=re.IGNORECASE) for p in patterns)

    def is_abstract_heading(self, line: str) -> bool:
        return self._match_any(line, self.abstract_patterns)

    def is_introduction_heading(self, line: str) -> bool:
        return self._match_any(line, self.introduction_patterns)

    def is_section_heading(self, line: str) -> bool:
        return self._match_any(line, self.section_patterns)

    def is_any_heading(self, line: str) -> bool:
        return (
            self.is_abstract_heading(line)
            or self.is_introduction_heading(line)
            or self.is_section_heading(line)
        )


DEFAULT_SECTION_CONFIG = SectionConfig()


def extract_sections(raw_text: str, config: SectionConfig | None = None) -> tuple[str, str]:
    """Return (abstract, introduction) spans located via heading patterns.

    The abstract runs from the abstract heading to the next heading of any
    kind; the introduction runs from the introduction heading to the next
    top-level heading, or to the end of the text when none follows.
    """
    if not raw_text.strip():
        raise SectionNotFound("abstract")
    config = config or DEFAULT_SECTION_CONFIG
    lines = raw_text.splitlines()

    abstract_start = None
    for i, line in enumerate(lines):
        if config.is_abstract_heading(line):
            abstract_start = i + 1
            break
    if abstract_start is None:
        raise SectionNotFound("abstract")

    abstract_end = len(lines)
    for i in range(abstract_start, len(lines)):
        if config.is_any_heading(lines[i]):
            abstract_end = i
            break
    abstract = "\n".join(lines[abstract_start:abstract_end]).strip()
    if not abstract:
        raise SectionNotFound("abstract")

    intro_start = None
    for i in range(abstract_end, len(lines)):
        if config.is_introduction_heading(lines[i]):
            intro_start = i + 1
            break
    if intro_start is None:
        raise SectionNotFound("introduction")

    intro_end = len(lines)
    for i in range(intro_start, len(lines)):
        if config.is_section_heading(lines[i]) and not config.is_introduction_heading(lines[i]):
            intro_end = i
            break
    introduction = "\n".join(lines[intro_start:intro_end]).strip()
    if not introduction:
        raise SectionNotFound("introduction")

    return abstract, introduction


# ---------------------------------------------------------------------------
# Metadata stripping
# ---------------------------------------------------------------------------

# Line-level patterns for author/affiliation/venue/footer boilerplate.
DEFAULT_STRIP_PATTERNS: tuple[str, ...] = (
    r"^\s*proceedings of\b",
    r"^\s*published (?:as a conference paper )?(?:at|in)\b",
    r"^\s*accepted (?:at|to|for)\b",
    r"^\s*to appear in\b",
    r"^\s*under review\b",
    r"^\s*arxiv:\d{4}\.\d{4,5}",
    r"\S+@\S+\.\S+",
    r"^\s*(?:department|dept\.?|school|institute|faculty) of\b",
    r"^\s*university of\b",
    r"^\s*(?:copyright|©)\b",
    r"^\s*(?:\*\s*)?(?:corresponding author|equal contribution)\b",
    r"^\s*page \d+\s*$",
    r"^\s*\d+\s*$",
)


def strip_metadata(doc: Document, patterns: Sequence[str] | None = None) -> Document:
    """Drop boilerplate lines and mark the document stripped.

    Idempotent: re-applying to an already stripped document changes nothing.
    Pass an empty pattern list to accept pre-stripped input as-is.
    """
    if doc.state is DocState.MASKED:
        raise InvalidState(f"cannot strip masked document {doc.id}")
    if patterns is None:
        patterns = DEFAULT_STRIP_PATTERNS
    compiled = [re.compile(p, flags=re.IGNORECASE) for p in patterns]

    def clean(text: str) -> str:
        kept = [line for line in text.splitlines() if not any(c.search(line) for c in compiled)]
        return "\n".join(kept)

    return replace(
        doc,
        abstract=clean(doc.abstract),
        introduction=clean(doc.introduction),
        state=DocState.STRIPPED,
    )


def strip_corpus(corpus: Corpus, patterns: Sequence[str] | None = None) -> Corpus:
    return Corpus([strip_metadata(d, patterns) for d in corpus.documents], splits=corpus.splits)


# ---------------------------------------------------------------------------
# Sentence segmentation
# ---------------------------------------------------------------------------

# Versioned so fixtures can pin behaviour; extend rather than edit in place.
ABBREVIATIONS_VERSION = 1
DEFAULT_ABBREVIATIONS: tuple[str, ...] = (
    "e.g.", "i.e.", "et al.", "al.", "etc.", "cf.", "vs.", "viz.",
    "fig.", "figs.", "eq.", "eqs.", "tab.", "sec.", "no.", "vol.",
    "dr.", "prof.", "mr.", "mrs.", "ms.", "jr.", "sr.", "st.",
    "u.s.", "u.k.", "approx.", "resp.", "w.r.t.",
)

_TERMINALS = ".?!"


def _ends_with_abbreviation(prefix: str, abbreviations: Sequence[str]) -> bool:
    # single-letter initials ("A. Author") never end a sentence
    if (
        len(prefix) >= 2
        and prefix[-2].isupper()
        and (len(prefix) == 2 or not prefix[-3].isalnum())
    ):
        return True
    lowered = prefix.lower()
    for abbr in abbreviations:
        if not lowered.endswith(abbr):
            continue
        before = len(lowered) - len(abbr) - 1
        if before < 0 or not (lowered[before].isalnum() or lowered[before] == "."):
            return True
    return False


def segment_sentences(
    text: str,
    doc_id: str = "",
    abbreviations: Sequence[str] | None = None,
) -> list[Sentence]:
    """Split on '.', '?' or '!' followed by whitespace and an uppercase letter.

    A period preceded by a known abbreviation never ends a sentence. Text with
    no terminal punctuation comes back as a single sentence.
    """
    if not text.strip():
        raise ValueError("cannot segment empty text")
    if abbreviations is None:
        abbreviations = DEFAULT_ABBREVIATIONS

    boundaries: list[int] = []
    for i, char in enumerate(text):
        if char not in _TERMINALS:
            continue
        j = i + 1
        if j >= len(text) or not text[j].isspace():
            continue
        while j < len(text) and text[j].isspace():
            j += 1
        if j >= len(text) or not text[j].isupper():
            continue
        if char == "." and _ends_with_abbreviation(text[: i + 1], abbreviations):
            continue
        boundaries.append(i + 1)

    sentences: list[Sentence] = []
    start = 0
    for boundary in boundaries + [len(text)]:
        chunk = text[start:boundary].strip()
        if chunk:
            sentences.append(Sentence(doc_id=doc_id, index=len(sentences), text=chunk))
        start = boundary
    return sentences


# ---------------------------------------------------------------------------
# Corpus splitting
# ---------------------------------------------------------------------------

def _largest_remainder(total: int, ratios: Sequence[float]) -> list[int]:
    quotas = [total * r for r in ratios]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def split_corpus(
    corpus: Corpus,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    names: tuple[str, str, str] = ("train", "val", "test"),
) -> Corpus:
    """Deterministic largest-remainder split, stratified by label when present.

    Split sizes are fixed globally first, then per-class quotas are rounded
    inside those sizes so each split's label mix stays within one document of
    the corpus proportions.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    if any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")

    split_sizes = _largest_remainder(len(corpus), ratios)

    groups: dict[object, list[str]] = {}
    for doc in corpus.documents:
        groups.setdefault(doc.label, []).append(doc.id)
    group_keys = sorted(groups, key=lambda k: "" if k is None else k.value)  # type: ignore[union-attr]

    # floor allocation per (class, split), then hand leftover slots in each
    # split to the class with the largest fractional remainder that still
    # needs documents.
    alloc = {k: [math.floor(len(groups[k]) * r) for r in ratios] for k in group_keys}
    remainders = {k: [len(groups[k]) * r - a for r, a in zip(ratios, alloc[k])] for k in group_keys}
    need = {k: len(groups[k]) - sum(alloc[k]) for k in group_keys}
    for s in range(len(ratios)):
        leftover = split_sizes[s] - sum(alloc[k][s] for k in group_keys)
        candidates = sorted(group_keys, key=lambda k: (-remainders[k][s], group_keys.index(k)))
        for k in candidates:
            if leftover == 0:
                break
            if need[k] > 0:
                alloc[k][s] += 1
                need[k] -= 1
                leftover -= 1

    rng = random.Random(seed)
    split_ids: dict[str, list[str]] = {name: [] for name in names}
    for k in group_keys:
        ids = sorted(groups[k])
        rng.shuffle(ids)
        cursor = 0
        for s, name in enumerate(names):
            take = alloc[k][s]
            split_ids[name].extend(ids[cursor : cursor + take])
            cursor += take

    for name in names:
        split_ids[name].sort()
    return Corpus(list(corpus.documents), splits=split_ids)
