"""Corpus preparation walkthrough
=================================

Reads a raw paper text, pulls out the abstract and introduction, strips
author/venue boilerplate, segments sentences and builds a stratified split.
"""

from rigourkit.corpus import (
    Corpus,
    Document,
    RigourLabel,
    extract_sections,
    segment_sentences,
    split_corpus,
    strip_metadata,
)

RAW_PAPER = """\
Abstract
We probe how sentence framing shifts reader trust. Controlled rewrites of
method sections let us isolate wording from substance.
1 Introduction
Proceedings of the 9th Workshop on Trust
jane.doe@example.edu
Reader trust depends on more than results. We vary hedging density across
rewrites, e.g. swapping modal verbs, and measure rating changes. Strong
claims without evidence lower trust. Careful claims with evidence raise it.
2 Related Work
Earlier studies measured citation counts instead.
"""

# Section extraction: everything between the abstract heading and the first
# numbered heading, then between the introduction heading and the next one.
abstract, introduction = extract_sections(RAW_PAPER)
print("abstract:")
print(" ", abstract.replace("\n", "\n  "))
print("introduction (raw):")
print(" ", introduction.replace("\n", "\n  "))

# Boilerplate lines (venue, email) disappear during stripping.
doc = Document(id="demo-paper", abstract=abstract, introduction=introduction)
stripped = strip_metadata(doc)
print("\nintroduction (stripped):")
print(" ", stripped.introduction.replace("\n", "\n  "))

# Sentence segmentation respects abbreviations like "e.g." above.
sentences = segment_sentences(stripped.introduction, doc_id=stripped.id)
print(f"\n{len(sentences)} sentences:")
for sentence in sentences:
    print(f"  [{sentence.index}] {sentence.text}")

# A labeled corpus splits deterministically and stratified by label.
documents = []
for i in range(40):
    label = RigourLabel.FOUR_STAR if i % 4 == 0 else RigourLabel.NON_FOUR_STAR
    documents.append(
        Document(
            id=f"syn-{i:02d}",
            abstract=f"Synthetic abstract {i}.",
            introduction=f"Synthetic introduction {i}.",
            label=label,
        )
    )
corpus = split_corpus(Corpus(documents), ratios=(0.8, 0.1, 0.1), seed=7)
for name, ids in corpus.splits.items():
    positives = sum(
        1 for d in corpus.documents if d.id in set(ids) and d.label is RigourLabel.FOUR_STAR
    )
    print(f"split {name}: {len(ids)} documents, {positives} rated 4*")
