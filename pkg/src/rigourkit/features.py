"""Bag-of-words features, mutual information and the in-core rigour classifier.

The classifier is a full-batch L2-regularized logistic regression trained by
gradient descent with backtracking line search. Its coefficients, restricted
to the mutual-information-selected percentile, produce the ranked rigour
keyword lists (positive coefficients lean 4*, negative lean non-4*).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, DocState, RigourLabel
from .errors import EmptyVocabulary, NotConverged, SingleClassLabels

_TOKEN_RE = re.compile(r"[a-z]{2,}")
MASK_LITERAL = "[MASK]"


def tokenize_for_features(text: str) -> list[str]:
    """Lowercased alphabetic runs of length >= 2; mask tokens are dropped."""
    return _TOKEN_RE.findall(text.replace(MASK_LITERAL, " ").lower())


@dataclass
class FeatureMatrix:
    vocabulary: list[str]
    rows: np.ndarray
    binarized: bool = False

    def __post_init__(self):
        self.rows = np.asarray(self.rows)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.vocabulary):
            raise ValueError("rows must be (n_docs, n_vocab)")
        if sorted(set(self.vocabulary)) != self.vocabulary:
            raise ValueError("vocabulary must be sorted and duplicate-free")
        if self.binarized and not np.isin(self.rows, (0, 1)).all():
            raise ValueError("binarized matrix must contain only 0/1")

    @property
    def n_docs(self) -> int:
        return int(self.rows.shape[0])

    def restrict(self, indices: list[int]) -> "FeatureMatrix":
        return FeatureMatrix(
            vocabulary=[self.vocabulary[i] for i in indices],
            rows=self.rows[:, indices],
            binarized=self.binarized,
        )


def build_feature_matrix(corpus: Corpus, binarize: bool = False, min_df: int = 5) -> FeatureMatrix:
    """Count matrix over tokens appearing in at least min_df documents."""
    if len(corpus) == 0:
        raise EmptyVocabulary("empty corpus")
    for doc in corpus.documents:
        if doc.state is DocState.RAW:
            raise ValueError(f"document {doc.id} must be stripped or masked before featurization")

    doc_tokens = [tokenize_for_features(d.text) for d in corpus.documents]
    df: dict[str, int] = {}
    for tokens in doc_tokens:
        for token in set(tokens):
            df[token] = df.get(token, 0) + 1
    vocabulary = sorted(t for t, count in df.items() if count >= min_df)
    if not vocabulary:
        raise EmptyVocabulary(f"no token appears in >= {min_df} documents")

    index = {t: i for i, t in enumerate(vocabulary)}
    rows = np.zeros((len(corpus), len(vocabulary)), dtype=np.int64)
    for r, tokens in enumerate(doc_tokens):
        for token in tokens:
            col = index.get(token)
            if col is not None:
                rows[r, col] += 1
    if binarize:
        rows = (rows > 0).astype(np.int64)
    return FeatureMatrix(vocabulary=vocabulary, rows=rows, binarized=binarize)


def labels_to_array(labels: list[RigourLabel]) -> np.ndarray:
    if any(label is None for label in labels):
        raise ValueError("all documents must be labeled")
    return np.array([1 if lab is RigourLabel.FOUR_STAR else 0 for lab in labels], dtype=np.int64)


# ---------------------------------------------------------------------------
# Mutual information
# ---------------------------------------------------------------------------

def mutual_information(matrix: FeatureMatrix, labels: list[RigourLabel]) -> np.ndarray:
    """Plug-in MI (nats) of each binary feature against the binary label.

    Each term is (n_xy/n) * ln(n_xy*n / (n_x*n_y)), computed from integer
    counts so product-form tables give exactly zero.
    """
    if not matrix.binarized:
        raise ValueError("mutual information requires a binarized matrix")
    y = labels_to_array(labels)
    if len(y) != matrix.n_docs:
        raise ValueError("labels do not align with matrix rows")
    if y.min() == y.max():
        raise SingleClassLabels("both classes are required")

    n = matrix.n_docs
    x = matrix.rows
    n_y1 = int(y.sum())
    n_y0 = n - n_y1
    n_x1 = x.sum(axis=0)
    n_x0 = n - n_x1
    n_11 = y @ x
    n_10 = n_x1 - n_11
    n_01 = n_y1 - n_11
    n_00 = n_y0 - n_10

    scores = np.zeros(len(matrix.vocabulary))
    for n_xy, n_x, n_yv in (
        (n_11, n_x1, n_y1),
        (n_10, n_x1, n_y0),
        (n_01, n_x0, n_y1),
        (n_00, n_x0, n_y0),
    ):
        cell = np.asarray(n_xy, dtype=np.float64)
        margin = np.asarray(n_x, dtype=np.float64) * float(n_yv)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = (cell / n) * np.log((cell * n) / margin)
        scores += np.where(cell > 0, term, 0.0)
    return np.maximum(scores, 0.0)


def select_percentile(scores, percentile: float) -> list[int]:
    """Indices of the top ceil(percentile% of n) scores, ties to lower index."""
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100]")
    scores = np.asarray(scores, dtype=np.float64)
    k = math.ceil(percentile / 100 * len(scores))
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(order[:k])


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------

@dataclass
class ClassifierModel:
    vocabulary: list[str]
    weights: np.ndarray
    bias: float
    l2_lambda: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    iterations: int = 0
    final_loss: float = 0.0

    def __post_init__(self):
        if len(self.weights) != len(self.vocabulary):
            raise ValueError("weights must align with the vocabulary")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    def decision_values(self, matrix: FeatureMatrix) -> np.ndarray:
        if matrix.vocabulary != self.vocabulary:
            raise ValueError("matrix vocabulary does not match the model")
        x = (matrix.rows - self.feature_means) / self.feature_scales
        return x @ self.weights + self.bias

    def predict_proba(self, matrix: FeatureMatrix) -> np.ndarray:
        return _sigmoid(self.decision_values(matrix))

    def predict(self, matrix: FeatureMatrix) -> np.ndarray:
        return (self.predict_proba(matrix) >= 0.5).astype(np.int64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    exp_z = np.exp(z[~pos])
    out[~pos] = exp_z / (1.0 + exp_z)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def logistic_loss(x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float) -> float:
    # -y ln(sigma) - (1-y) ln(1-sigma) written as softplus(-z) / softplus(z);
    # the label-branched form makes label negation mirror bit-exactly.
    z = x @ w + b
    return float(np.mean(_softplus(np.where(y == 1.0, -z, z))) + l2 * np.dot(w, w))


def logistic_gradient(
    x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2: float
) -> tuple[np.ndarray, float]:
    z = x @ w + b
    residual = np.where(y == 1.0, -_sigmoid(-z), _sigmoid(z))
    grad_w = x.T @ residual / len(y) + 2.0 * l2 * w
    grad_b = float(residual.mean())
    return grad_w, grad_b


def standardize_columns(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column z-scoring; constant columns are passed through untouched."""
    rows = rows.astype(np.float64)
    means = rows.mean(axis=0)
    scales = rows.std(axis=0)
    constant = scales == 0.0
    means = np.where(constant, 0.0, means)
    scales = np.where(constant, 1.0, scales)
    return (rows - means) / scales, means, scales


def fit_logistic_regression(
    matrix: FeatureMatrix,
    labels: list[RigourLabel],
    l2_lambda: float = 1e-2,
    max_iters: int = 2000,
    tol: float = 1e-6,
) -> ClassifierModel:
    """Deterministic full-batch descent from zero weights.

    Each step uses Armijo backtracking from unit step size; training stops
    when the gradient infinity-norm drops below tol. Hitting the iteration
    cap raises a NotConverged warning but still returns the last iterate.
    """
    y = labels_to_array(labels).astype(np.float64)
    if y.min() == y.max():
        raise SingleClassLabels("both classes are required to fit the classifier")
    x, means, scales = standardize_columns(matrix.rows)

    w = np.zeros(x.shape[1])
    b = 0.0
    loss = logistic_loss(x, y, w, b, l2_lambda)
    iterations = 0
    grad_norm = math.inf
    for iterations in range(1, max_iters + 1):
        grad_w, grad_b = logistic_gradient(x, y, w, b, l2_lambda)
        grad_norm = max(float(np.abs(grad_w).max(initial=0.0)), abs(grad_b))
        if grad_norm < tol:
            iterations -= 1
            break
        step = 1.0
        sq = float(np.dot(grad_w, grad_w)) + grad_b**2
        accepted = False
        for _ in range(60):
            cand_w = w - step * grad_w
            cand_b = b - step * grad_b
            cand_loss = logistic_loss(x, y, cand_w, cand_b, l2_lambda)
            if cand_loss <= loss - 1e-4 * step * sq:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # loss differences fell below float resolution: converged
            iterations -= 1
            break
        w, b, loss = cand_w, cand_b, cand_loss
    else:
        warnings.warn(
            f"gradient descent stopped at max_iters={max_iters} with grad norm {grad_norm:.3g}",
            NotConverged,
        )

    return ClassifierModel(
        vocabulary=list(matrix.vocabulary),
        weights=w,
        bias=float(b),
        l2_lambda=l2_lambda,
        feature_means=means,
        feature_scales=scales,
        iterations=iterations,
        final_loss=loss,
    )


# ---------------------------------------------------------------------------
# Evaluation and keyword ranking
# ---------------------------------------------------------------------------

@dataclass
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: list[str] = field(default_factory=list)


def evaluate_classifier(model: ClassifierModel, matrix: FeatureMatrix, labels) -> EvalMetrics:
    """Threshold 0.5; precision/recall/F1 of the 4* class."""
    y = labels_to_array(labels)
    pred = model.predict(matrix)
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())

    degenerate: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * tp, 2 * tp + fp + fn, "f1")
    accuracy = (tp + tn) / len(y)
    return EvalMetrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1, degenerate=degenerate)


def save_label_predictions(path, ids, labels: list[RigourLabel], scores) -> None:
    """Predictions JSONL: {"id": str, "label": "4*"|"non-4*", "score": float}."""
    import json
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for doc_id, label, score in zip(ids, labels, scores):
            record = {"id": doc_id, "label": label.value, "score": float(score)}
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


def load_label_predictions(path) -> dict[str, RigourLabel]:
    import json
    from pathlib import Path

    out: dict[str, RigourLabel] = {}
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            out[record["id"]] = RigourLabel.parse(record["label"])
    return out


@dataclass(frozen=True)
class KeywordFeature:
    token: str
    mi_score: float
    coefficient: float
    label: RigourLabel

    def __post_init__(self):
        if self.mi_score < 0:
            raise ValueError("mi_score must be non-negative")
        expected = RigourLabel.FOUR_STAR if self.coefficient > 0 else RigourLabel.NON_FOUR_STAR
        if self.label is not expected:
            raise ValueError("label must follow the coefficient sign")


def rank_rigour_keywords(
    model: ClassifierModel,
    mi_scores,
    percentile: float = 10.0,
    top_k: int = 100,
) -> tuple[list[KeywordFeature], list[KeywordFeature]]:
    """Within the MI-selected percentile, the strongest positive and negative
    coefficients become the 4* and non-4* keyword lists."""
    mi_scores = np.asarray(mi_scores, dtype=np.float64)
    if len(mi_scores) != len(model.vocabulary):
        raise ValueError("mi_scores do not align with the model vocabulary")
    selected = select_percentile(mi_scores, percentile)

    positive = [i for i in selected if model.weights[i] > 0]
    negative = [i for i in selected if model.weights[i] < 0]
    positive.sort(key=lambda i: (-model.weights[i], model.vocabulary[i]))
    negative.sort(key=lambda i: (model.weights[i], model.vocabulary[i]))

    def pack(indices: list[int]) -> list[KeywordFeature]:
        out = []
        for i in indices[:top_k]:
            coef = float(model.weights[i])
            out.append(
                KeywordFeature(
                    token=model.vocabulary[i],
                    mi_score=float(mi_scores[i]),
                    coefficient=coef,
                    label=RigourLabel.FOUR_STAR if coef > 0 else RigourLabel.NON_FOUR_STAR,
                )
            )
        return out

    return pack(positive), pack(negative)
