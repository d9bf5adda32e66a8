"""Topic masking walkthrough
============================

Domain keywords are the n-grams most similar to the whole document in
embedding space; masking them keeps a downstream classifier from keying on
the topic instead of the writing.
"""

from rigourkit.corpus import DocState, Document
from rigourkit.embed import Embedder, MockEmbeddingProvider
from rigourkit.mask import extract_topic_keywords, mask_document

doc = Document(
    id="demo",
    abstract=(
        "Protein folding prediction with lattice models. Lattice models "
        "approximate folding pathways at coarse resolution."
    ),
    introduction=(
        "We study protein folding on cubic lattice models. Folding quality "
        "improves when lattice resolution increases. The evaluation follows "
        "standard practice and reports robust aggregate statistics."
    ),
    state=DocState.STRIPPED,
)

embedder = Embedder(MockEmbeddingProvider(dim=512))
keywords = extract_topic_keywords(doc, embedder, k=4)
print("top topic keywords by cosine to the document embedding:")
for keyword in keywords:
    print(f"  {keyword.surface!r}: {keyword.score:.4f}")

masked = mask_document(doc, keywords)
print("\nmasked introduction:")
print(" ", masked.introduction)

# masking is idempotent: a second pass changes nothing
again = mask_document(masked, keywords)
print("\nsecond masking pass identical:", again == masked)
