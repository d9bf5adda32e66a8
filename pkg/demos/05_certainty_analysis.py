"""Sentence certainty analysis walkthrough
==========================================

Sentences are labeled with their most similar rigour criterion (dropping
anything below the similarity threshold), joined with per-sentence certainty
probabilities, and aggregated into a criterion-by-aspect grid of 4* minus
non-4* mean differences.
"""

from rigourkit.certainty import (
    ASPECTS,
    MockCertaintyProvider,
    aggregate_certainty,
    label_sentences,
)
from rigourkit.corpus import segment_sentences
from rigourkit.embed import Embedder, MockEmbeddingProvider
from rigourkit.synthetic import FIXTURE_DIM, FIXTURE_SENTENCE_THRESHOLD, salience_fixture

fixture = salience_fixture()
embedder = Embedder(MockEmbeddingProvider(dim=FIXTURE_DIM))

sentences = []
for doc in fixture.corpus.documents:
    sentences.extend(segment_sentences(doc.text, doc_id=doc.id))
print(f"{len(sentences)} sentences from {len(fixture.corpus)} documents")

doc_labels = {d.id: d.label for d in fixture.corpus.documents}
labels = label_sentences(
    sentences,
    fixture.registry,
    embedder,
    threshold=FIXTURE_SENTENCE_THRESHOLD,
    doc_labels=doc_labels,
)
print(f"{len(labels)} sentences survived the {FIXTURE_SENTENCE_THRESHOLD} similarity threshold")

per_criterion: dict[str, int] = {}
for label in labels:
    per_criterion[label.criterion] = per_criterion.get(label.criterion, 0) + 1
for criterion in sorted(per_criterion):
    print(f"  {criterion:16s} {per_criterion[criterion]}")

predictions = MockCertaintyProvider().predict([l.sentence for l in labels])
breakdown = aggregate_certainty(labels, predictions)

print("\ncertain-polarity grid (100 x mean probability difference, 4* minus non-4*):")
header = "".join(f"{aspect[:9]:>11s}" for aspect in ASPECTS)
print(f"{'criterion':16s}{header}")
grid = breakdown.grid("certain")
for criterion in sorted(grid):
    cells = "".join(
        f"{grid[criterion][aspect]:11.2f}" if grid[criterion][aspect] is not None else f"{'NA':>11s}"
        for aspect in ASPECTS
    )
    print(f"{criterion:16s}{cells}")
