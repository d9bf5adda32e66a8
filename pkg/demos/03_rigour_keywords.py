"""Rigour keyword mining walkthrough
====================================

A bag-of-words logistic regression separates 4* from non-4* documents;
mutual information picks the informative vocabulary slice and the signed
coefficients split it into 4*-leaning and non-4*-leaning keyword lists.
"""

import numpy as np

from rigourkit.corpus import split_corpus
from rigourkit.features import (
    build_feature_matrix,
    evaluate_classifier,
    fit_logistic_regression,
    mutual_information,
    rank_rigour_keywords,
)
from rigourkit.synthetic import keyword_fixture

corpus = split_corpus(keyword_fixture(), ratios=(0.8, 0.1, 0.1), seed=3)
train = corpus.subset("train")
print(f"training on {len(train)} documents")

matrix = build_feature_matrix(train, binarize=True, min_df=5)
print(f"vocabulary size: {len(matrix.vocabulary)}")

mi = mutual_information(matrix, train.labels())
best = int(np.argmax(mi))
print(f"highest mutual information: {matrix.vocabulary[best]!r} ({mi[best]:.4f} nats)")

model = fit_logistic_regression(matrix, train.labels())
print(f"classifier converged after {model.iterations} iterations, loss {model.final_loss:.4f}")

metrics = evaluate_classifier(model, matrix, train.labels())
print(f"training accuracy {metrics.accuracy:.3f}, F1 {metrics.f1:.3f}")

positive, negative = rank_rigour_keywords(model, mi, percentile=10, top_k=5)
print("\nkeywords leaning 4*:")
for k in positive:
    print(f"  {k.token:12s} mi={k.mi_score:.4f} coefficient={k.coefficient:+.3f}")
print("keywords leaning non-4*:")
for k in negative:
    print(f"  {k.token:12s} mi={k.mi_score:.4f} coefficient={k.coefficient:+.3f}")
