"""Topic-bias mitigation: find a document's domain keywords and mask them.

Candidates are stopword-filtered unigrams and bigrams ranked by cosine
similarity between the candidate embedding and the whole-document embedding;
the winners are replaced in the text by a literal "[MASK]" token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable

from .corpus import Corpus, DocState, Document
from .embed import as_embedder, cosine_similarity
from .errors import InvalidState, NoCandidates

MASK_TOKEN = "[MASK]"

_WORD_RE = re.compile(r"[a-z][a-z0-9]*")


def _load_stopwords() -> frozenset[str]:
    text = resources.files("rigourkit.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


STOPWORDS = _load_stopwords()


@dataclass(frozen=True)
class TopicKeyword:
    surface: str
    score: float

    def __post_init__(self):
        if not self.surface or MASK_TOKEN.lower() in self.surface.lower():
            raise ValueError(f"invalid keyword surface {self.surface!r}")


def _candidate_ngrams(text: str, stopwords: frozenset[str]) -> list[str]:
    tokens = _WORD_RE.findall(text.replace(MASK_TOKEN, " ").lower())
    content = [t for t in tokens if t not in stopwords]
    candidates = set(content)
    for a, b in zip(tokens, tokens[1:]):
        if a not in stopwords and b not in stopwords:
            candidates.add(f"{a} {b}")
    return sorted(candidates)


def extract_topic_keywords(
    doc: Document,
    embedder,
    k: int = 10,
    stopwords: frozenset[str] | None = None,
) -> list[TopicKeyword]:
    """Top-k 1/2-gram candidates by cosine to the document embedding.

    Ties break lexicographically; fewer than k candidates means all of them.
    """
    if doc.state is not DocState.STRIPPED:
        raise InvalidState(f"document {doc.id} must be stripped before keyword extraction")
    if k < 1:
        raise ValueError("k must be >= 1")
    stopwords = STOPWORDS if stopwords is None else stopwords
    embedder = as_embedder(embedder)

    candidates = _candidate_ngrams(doc.text, stopwords)
    if not candidates:
        raise NoCandidates(f"no keyword candidates left in document {doc.id}")

    doc_vec = embedder.embed_document(doc.text)
    scored = []
    for cand in candidates:
        cand_vec = embedder.embed_document(cand)
        scored.append((cosine_similarity(cand_vec, doc_vec), cand))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [TopicKeyword(surface=c, score=s) for s, c in scored[: min(k, len(scored))]]


def extract_corpus_keywords(
    corpus: Corpus,
    embedder,
    k: int = 10,
    stopwords: frozenset[str] | None = None,
) -> list[TopicKeyword]:
    """Corpus-scope variant: one keyword list from the concatenated text."""
    joined = "\n\n".join(d.text for d in corpus.documents)
    probe = Document(id="__corpus__", abstract=joined or " ", introduction=" ", state=DocState.STRIPPED)
    return extract_topic_keywords(probe, embedder, k=k, stopwords=stopwords)


def _keyword_pattern(surface: str) -> re.Pattern:
    words = [re.escape(w) for w in surface.split()]
    body = r"\s+".join(words)
    return re.compile(rf"(?<![A-Za-z0-9]){body}(?![A-Za-z0-9])", flags=re.IGNORECASE)


def mask_text(text: str, keywords: Iterable[TopicKeyword]) -> str:
    """Replace whole-word keyword occurrences with the mask token.

    Longer keywords claim their spans first so a contained shorter keyword
    cannot re-mask part of the replacement; existing mask tokens are left
    untouched, which makes the operation idempotent.
    """
    claimed: list[tuple[int, int, str]] = []
    for match in re.finditer(re.escape(MASK_TOKEN), text):
        claimed.append((match.start(), match.end(), MASK_TOKEN))

    def overlaps(start: int, end: int) -> bool:
        return any(start < c_end and c_start < end for c_start, c_end, _ in claimed)

    ordered = sorted(keywords, key=lambda kw: (-len(kw.surface.split()), -len(kw.surface), kw.surface))
    for keyword in ordered:
        for match in _keyword_pattern(keyword.surface).finditer(text):
            if not overlaps(match.start(), match.end()):
                claimed.append((match.start(), match.end(), MASK_TOKEN))

    out = []
    cursor = 0
    for start, end, token in sorted(claimed):
        out.append(text[cursor:start])
        out.append(token)
        cursor = end
    out.append(text[cursor:])
    return "".join(out)


def mask_document(doc: Document, keywords: Iterable[TopicKeyword]) -> Document:
    if doc.state is DocState.RAW:
        raise InvalidState(f"document {doc.id} must be stripped before masking")
    return replace(
        doc,
        abstract=mask_text(doc.abstract, keywords),
        introduction=mask_text(doc.introduction, keywords),
        state=DocState.MASKED,
    )


def mask_corpus(
    corpus: Corpus,
    embedder,
    k: int = 10,
    scope: str = "document",
) -> tuple[Corpus, dict[str, list[TopicKeyword]]]:
    """Mask every document; returns the masked corpus and a per-document audit."""
    if scope not in ("document", "corpus"):
        raise ValueError(f"unknown keyword scope {scope!r}")
    shared = extract_corpus_keywords(corpus, embedder, k=k) if scope == "corpus" else None
    audit: dict[str, list[TopicKeyword]] = {}
    masked = []
    for doc in corpus.documents:
        keywords = shared if shared is not None else extract_topic_keywords(doc, embedder, k=k)
        audit[doc.id] = keywords
        masked.append(mask_document(doc, keywords))
    return Corpus(masked, splits=corpus.splits), audit
