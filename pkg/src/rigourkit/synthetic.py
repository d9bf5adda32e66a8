"""Deterministic synthetic fixtures.

Real review-graded corpora cannot be redistributed, so the library ships
seeded generators instead: a salience fixture whose 4* documents are built
from the vocabulary of a planted criteria triple, and a keyword fixture with
a token planted at 90%/10% class prevalence. Both are plain corpora and
registries, usable by the pipeline, the demos and the test suite alike.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus, DocState, Document, RigourLabel, save_corpus
from .criteria import SOURCE_GENERATED, Criterion, CriteriaRegistry, save_registry
from .embed import MockEmbeddingProvider
from .salience import RETRIEVAL_INSTRUCTION

# The fixture is built for the mock one-hot embedder at this dimension; its
# token strings are chosen so that no two tokens hash to the same axis, which
# keeps zero similarities exactly zero and the subset ranking deterministic.
FIXTURE_DIM = 4096

# Unequal vocabulary sizes are deliberate: they give the three planted
# criteria different singleton-query scales, so summing per-criterion
# similarities is noisier than scoring the one appended query.
FIXTURE_VOCAB_SIZES = {
    "Biases": 20,
    "Settings": 20,
    "Constraints": 20,
    "Limitations": 20,
    "Baselines": 12,
    "Benchmarks": 20,
    "Examples": 20,
    "Reproducibility": 32,
}

FIXTURE_CRITERIA_NAMES = tuple(FIXTURE_VOCAB_SIZES)

PLANTED_CRITERIA = ("Baselines", "Benchmarks", "Reproducibility")

NOISE_VOCAB_SIZE = 40


def _letters(i: int) -> str:
    return chr(97 + i // 26) + chr(97 + i % 26)


class _TokenSpace:
    """Generates fixture tokens whose mock-embedding axes never collide."""

    def __init__(self, dim: int = FIXTURE_DIM):
        self.probe = MockEmbeddingProvider(dim=dim)
        self.used: set[int] = {self.probe._axis("ins:" + RETRIEVAL_INSTRUCTION)}

    def claim_fixed(self, token: str) -> str:
        axis = self.probe._axis("tok:" + token)
        if axis in self.used:
            raise RuntimeError(f"fixture token {token!r} collides; adjust FIXTURE_DIM")
        self.used.add(axis)
        return token

    def fresh(self, stem: str, i: int) -> str:
        token = f"{stem}{_letters(i)}"
        while self.probe._axis("tok:" + token) in self.used:
            token += "x"
        self.used.add(self.probe._axis("tok:" + token))
        return token


def _build_token_space(dim: int = FIXTURE_DIM) -> tuple[dict[str, list[str]], list[str]]:
    space = _TokenSpace(dim)
    for fixed in ("refers", "to"):
        space.claim_fixed(fixed)
    for name in FIXTURE_CRITERIA_NAMES:
        for word in name.lower().split():
            space.claim_fixed(word)
    vocabs: dict[str, list[str]] = {}
    for name, size in FIXTURE_VOCAB_SIZES.items():
        stem = "".join(ch for ch in name.lower() if ch.isalpha()) + "sig"
        vocabs[name] = [space.fresh(stem, i) for i in range(size)]
    noise = [space.fresh("fillerword", i) for i in range(NOISE_VOCAB_SIZE)]
    return vocabs, noise


def noise_vocab(size: int = NOISE_VOCAB_SIZE) -> list[str]:
    return [f"fillerword{_letters(i)}" for i in range(size)]


def synthetic_registry(dim: int = FIXTURE_DIM) -> CriteriaRegistry:
    vocabs, _ = _build_token_space(dim)
    criteria = []
    for name in FIXTURE_CRITERIA_NAMES:
        definition = "Refers to " + " ".join(vocabs[name])
        criteria.append(Criterion(name=name, definition=definition, source=SOURCE_GENERATED))
    return CriteriaRegistry(criteria)


def _compose_document(
    doc_id: str, token_groups: list[list[str]], label: RigourLabel, rng: random.Random
) -> Document:
    """Chunk each coherent token group into 8-14 token sentences.

    Keeping sentences single-topic makes the sentence-labeling stage
    meaningful while leaving the document-level token multiset (and hence
    every document embedding) unchanged by the grouping.
    """
    sentences: list[str] = []
    for group in token_groups:
        group = list(group)
        rng.shuffle(group)
        cursor = 0
        while cursor < len(group):
            take = rng.randint(8, 14)
            chunk = group[cursor : cursor + take]
            if chunk:
                sentences.append(" ".join(chunk).capitalize() + ".")
            cursor += take
    rng.shuffle(sentences)
    cut = max(1, len(sentences) // 4)
    abstract = " ".join(sentences[:cut])
    introduction = " ".join(sentences[cut:])
    return Document(
        id=doc_id,
        abstract=abstract,
        introduction=introduction,
        label=label,
        state=DocState.STRIPPED,
    )


@dataclass
class SalienceFixture:
    corpus: Corpus
    registry: CriteriaRegistry
    planted: tuple[str, ...]
    dim: int = FIXTURE_DIM


def salience_fixture(
    seed: int = 13,
    n_four_star: int = 80,
    n_noise: int = 60,
    n_contaminated: int = 60,
    doc_tokens: int = 100,
    dim: int = FIXTURE_DIM,
) -> SalienceFixture:
    """200-document corpus with a planted three-criterion signal.

    4* documents mix the vocabularies of all three planted criteria; half of
    the non-4* documents carry noise plus a sprinkle of distractor-criterion
    vocabulary, and the other half lean heavily on a single planted
    criterion. Every proper subset of the planted triple mixes the classes
    through the contaminated documents, and every superset breaks the exact
    zero-score ties of the sprinkled documents, so the planted triple is the
    unique rank-correlation optimum under the mock embedder.
    """
    rng = random.Random(seed)
    vocabs, noise = _build_token_space(dim)
    registry = CriteriaRegistry(
        [
            Criterion(
                name=name,
                definition="Refers to " + " ".join(vocabs[name]),
                source=SOURCE_GENERATED,
            )
            for name in FIXTURE_CRITERIA_NAMES
        ]
    )
    planted_vocabs = [vocabs[name] for name in PLANTED_CRITERIA]
    distractor_tokens = [
        token
        for name in FIXTURE_CRITERIA_NAMES
        if name not in PLANTED_CRITERIA
        for token in vocabs[name]
    ]

    # The small-vocabulary criterion gets the widest mass jitter: singleton
    # queries weight it most, so summing per-criterion similarities inherits
    # variance that the single appended query averages away.
    share_jitter = [(0.4, 1.6), (0.8, 1.2), (0.9, 1.1)]
    documents = []
    for i in range(n_four_star):
        signal_total = rng.randint(62, 80)
        groups: list[list[str]] = []
        shares = [rng.uniform(lo, hi) for lo, hi in share_jitter]
        for vocab, share in zip(planted_vocabs, shares):
            count = max(1, round(signal_total * share / sum(shares)))
            groups.append([rng.choice(vocab) for _ in range(count)])
        used = sum(len(g) for g in groups)
        groups.append([rng.choice(noise) for _ in range(max(0, doc_tokens - used))])
        documents.append(_compose_document(f"four-{i:03d}", groups, RigourLabel.FOUR_STAR, rng))

    for i in range(n_noise):
        sprinkle = [rng.choice(distractor_tokens) for _ in range(18)]
        filler = [rng.choice(noise) for _ in range(doc_tokens - len(sprinkle))]
        documents.append(
            _compose_document(f"noise-{i:03d}", [sprinkle, filler], RigourLabel.NON_FOUR_STAR, rng)
        )

    # Contamination leans toward the small-vocabulary criterion, whose
    # inflated singleton-query weight pushes these boundary documents up in
    # summed mode and compresses its class gap.
    heavy_pattern = (0, 0, 1, 2)
    for i in range(n_contaminated):
        heavy = heavy_pattern[i % len(heavy_pattern)]
        contamination = rng.randint(32, 46)
        groups = [[rng.choice(planted_vocabs[heavy]) for _ in range(contamination)]]
        for j, vocab in enumerate(planted_vocabs):
            if j != heavy:
                groups.append([rng.choice(vocab) for _ in range(4)])
        used = sum(len(g) for g in groups)
        groups.append([rng.choice(noise) for _ in range(max(0, doc_tokens - used))])
        documents.append(
            _compose_document(f"contam-{i:03d}", groups, RigourLabel.NON_FOUR_STAR, rng)
        )

    return SalienceFixture(
        corpus=Corpus(documents), registry=registry, planted=PLANTED_CRITERIA, dim=dim
    )


PLANTED_KEYWORD = "baseline"

# token, P(present | 4*), P(present | non-4*)
KEYWORD_SIGNALS = (
    ("baseline", 0.90, 0.10),
    ("ablation", 0.80, 0.20),
    ("thorough", 0.78, 0.22),
    ("justified", 0.76, 0.24),
    ("rigorous", 0.74, 0.26),
    ("sloppy", 0.24, 0.76),
    ("rushed", 0.26, 0.74),
    ("vague", 0.28, 0.72),
)


def keyword_fixture(
    seed: int = 3,
    n_four_star: int = 200,
    n_non_four_star: int = 200,
    n_noise_tokens: int = 54,
) -> Corpus:
    """Labeled corpus with 'baseline' present in 90% of 4* documents and 10%
    of non-4* documents, plus weaker signal tokens and 50/50 noise tokens."""
    rng = random.Random(seed)
    noise = noise_vocab(n_noise_tokens)

    documents = []
    specs = [(RigourLabel.FOUR_STAR, i) for i in range(n_four_star)]
    specs += [(RigourLabel.NON_FOUR_STAR, i) for i in range(n_non_four_star)]
    for label, i in specs:
        tokens = []
        for token, p_pos, p_neg in KEYWORD_SIGNALS:
            p = p_pos if label is RigourLabel.FOUR_STAR else p_neg
            if rng.random() < p:
                tokens.append(token)
        tokens.extend(word for word in noise if rng.random() < 0.5)
        if not tokens:
            tokens.append(noise[0])
        prefix = "four" if label is RigourLabel.FOUR_STAR else "non"
        documents.append(_compose_document(f"{prefix}-{i:03d}", [tokens], label, rng))
    return Corpus(documents)


# Mock cosine scores run lower than a production embedding model's, so the
# fixture pipeline labels sentences at a threshold matched to that scale.
FIXTURE_SENTENCE_THRESHOLD = 0.35


def write_pipeline_fixture(directory: str | Path, seed: int = 13) -> dict[str, Path]:
    """Materialize the salience fixture as pipeline inputs plus a ready
    mock-provider pipeline config."""
    import json

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fixture = salience_fixture(seed=seed)
    corpus_path = directory / "corpus.jsonl"
    registry_path = directory / "registry.json"
    config_path = directory / "config.json"
    save_corpus(fixture.corpus, corpus_path)
    save_registry(fixture.registry, registry_path)
    # paths are relative to the config file, so the fixture directory can move
    config = {
        "run_dir": "run",
        "seed": seed,
        "corpus": {"path": "corpus.jsonl"},
        "criteria": {"registry_path": "registry.json"},
        "providers": {"mock": True},
        "embed": {"dim": fixture.dim},
        "salience": {"top_m": 10},
        "certainty": {"threshold": FIXTURE_SENTENCE_THRESHOLD},
    }
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"corpus": corpus_path, "registry": registry_path, "config": config_path}
