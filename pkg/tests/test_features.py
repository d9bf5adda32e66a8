import math
import random
import warnings

import numpy as np
import pytest

from rigourkit.corpus import Corpus, DocState, Document, RigourLabel, split_corpus
from rigourkit.errors import EmptyVocabulary, NotConverged, SingleClassLabels
from rigourkit.features import (
    ClassifierModel,
    FeatureMatrix,
    build_feature_matrix,
    evaluate_classifier,
    fit_logistic_regression,
    load_label_predictions,
    logistic_gradient,
    logistic_loss,
    mutual_information,
    rank_rigour_keywords,
    save_label_predictions,
    select_percentile,
    standardize_columns,
)
from rigourkit.synthetic import PLANTED_KEYWORD

FOUR = RigourLabel.FOUR_STAR
NON = RigourLabel.NON_FOUR_STAR


def doc_from_text(i, text, label=None):
    return Document(
        id=f"d{i}", abstract=text, introduction=" ", label=label, state=DocState.STRIPPED
    )


def binary_matrix(columns):
    columns = np.asarray(columns)
    vocab = [f"tok{chr(97 + i)}" for i in range(columns.shape[1])]
    return FeatureMatrix(vocabulary=vocab, rows=columns, binarized=True)


# ---------------------------------------------------------------------------
# feature matrix
# ---------------------------------------------------------------------------

def test_counts_and_vocabulary():
    corpus = Corpus([doc_from_text(0, "aa bb aa"), doc_from_text(1, "bb cc")])
    matrix = build_feature_matrix(corpus, min_df=1)
    assert matrix.vocabulary == ["aa", "bb", "cc"]
    assert matrix.rows.tolist() == [[2, 1, 0], [0, 1, 1]]


def test_binarize():
    corpus = Corpus([doc_from_text(0, "aa bb aa"), doc_from_text(1, "bb cc")])
    matrix = build_feature_matrix(corpus, binarize=True, min_df=1)
    assert matrix.rows.tolist() == [[1, 1, 0], [0, 1, 1]]


def test_mask_token_never_in_vocabulary():
    corpus = Corpus(
        [doc_from_text(0, "deep [MASK] models work"), doc_from_text(1, "[MASK] deep work")]
    )
    matrix = build_feature_matrix(corpus, min_df=1)
    assert "mask" not in matrix.vocabulary
    assert "deep" in matrix.vocabulary


def test_min_df_filters_and_empty_vocabulary():
    corpus = Corpus([doc_from_text(0, "aa bb"), doc_from_text(1, "cc dd")])
    with pytest.raises(EmptyVocabulary):
        build_feature_matrix(corpus, min_df=2)


# ---------------------------------------------------------------------------
# mutual information
# ---------------------------------------------------------------------------

def mi_oracle(feature, labels):
    """Direct p*ln(p/(px*py)) summation over the 2x2 table."""
    ints = [1 if l is FOUR else 0 for l in labels]
    n = len(ints)
    total = 0.0
    for x in (0, 1):
        for y in (0, 1):
            n_xy = sum(1 for f, l in zip(feature, ints) if f == x and l == y)
            if n_xy == 0:
                continue
            p_xy = n_xy / n
            p_x = sum(1 for f in feature if f == x) / n
            p_y = sum(1 for l in ints if l == y) / n
            total += p_xy * math.log(p_xy / (p_x * p_y))
    return total


def test_mi_perfect_dependence_is_ln2():
    rows = [[1]] * 5 + [[0]] * 5
    labels = [FOUR] * 5 + [NON] * 5
    mi = mutual_information(binary_matrix(rows), labels)
    assert mi[0] == pytest.approx(math.log(2), abs=1e-12)


def test_mi_independence_is_exact_zero():
    # all four cells equal -> product form
    rows = [[1], [1], [0], [0]]
    labels = [FOUR, NON, FOUR, NON]
    mi = mutual_information(binary_matrix(rows), labels)
    assert mi[0] == 0.0


def test_mi_contingency_2112_matches_oracle():
    # counts [[2,1],[1,2]]: feature 1 with label 1 twice, etc.
    feature = [1, 1, 1, 0, 0, 0]
    labels = [FOUR, FOUR, NON, FOUR, NON, NON]
    mi = mutual_information(binary_matrix([[f] for f in feature]), labels)
    assert mi[0] == pytest.approx(mi_oracle(feature, labels), abs=1e-12)


def test_mi_matches_oracle_on_random_instances():
    rng = random.Random(17)
    for _ in range(300):
        n = rng.randint(4, 50)
        feature = [rng.randint(0, 1) for _ in range(n)]
        labels = [FOUR if rng.random() < 0.5 else NON for _ in range(n)]
        if len(set(labels)) < 2:
            continue
        mi = mutual_information(binary_matrix([[f] for f in feature]), labels)
        assert mi[0] == pytest.approx(mi_oracle(feature, labels), abs=1e-12)


def test_mi_symmetric_under_label_renaming():
    rng = random.Random(3)
    n = 40
    feature = [rng.randint(0, 1) for _ in range(n)]
    labels = [FOUR if rng.random() < 0.4 else NON for _ in range(n)]
    flipped = [NON if l is FOUR else FOUR for l in labels]
    a = mutual_information(binary_matrix([[f] for f in feature]), labels)[0]
    b = mutual_information(binary_matrix([[f] for f in feature]), flipped)[0]
    assert a == pytest.approx(b, abs=1e-12)
    # swapping feature and label roles gives the same value
    c = mutual_information(
        binary_matrix([[1 if l is FOUR else 0] for l in labels]),
        [FOUR if f else NON for f in feature],
    )[0]
    assert a == pytest.approx(c, abs=1e-12)


def test_mi_requires_binarized_and_both_classes():
    with pytest.raises(ValueError):
        mutual_information(FeatureMatrix(["aa"], np.array([[2], [0]])), [FOUR, NON])
    with pytest.raises(SingleClassLabels):
        mutual_information(binary_matrix([[1], [0]]), [FOUR, FOUR])


# ---------------------------------------------------------------------------
# percentile selection
# ---------------------------------------------------------------------------

def test_select_percentile_examples():
    assert select_percentile([0.1, 0.9, 0.5, 0.4], 50) == [1, 2]
    assert select_percentile([0.1, 0.9, 0.5, 0.4], 100) == [0, 1, 2, 3]


def test_select_percentile_ties_prefer_lower_index():
    assert select_percentile([0.5, 0.5, 0.5, 0.1], 50) == [0, 1]


def test_select_percentile_full_sort_oracle():
    rng = random.Random(8)
    scores = [rng.random() for _ in range(1000)]
    indices = select_percentile(scores, 10)
    assert len(indices) == 100
    cutoff = min(scores[i] for i in indices)
    excluded = [scores[i] for i in range(1000) if i not in set(indices)]
    assert all(cutoff >= s for s in excluded)


def test_select_percentile_nesting_consistency():
    rng = random.Random(5)
    scores = [rng.random() for _ in range(200)]
    first = select_percentile(scores, 30)
    # selecting again among the already selected keeps the global top scores
    second_local = select_percentile([scores[i] for i in first], 30)
    second = [first[j] for j in second_local]
    direct_count = len(second)
    direct = select_percentile(scores, 100 * direct_count / len(scores))
    assert second == direct
    # and repeating at 100% is the identity
    assert select_percentile([scores[i] for i in first], 100) == list(range(len(first)))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def fixed_dataset(n=20, d=5, seed=123):
    rng = np.random.RandomState(seed)
    x = rng.randn(n, d)
    w_true = rng.randn(d)
    y = (x @ w_true + 0.3 * rng.randn(n) > 0).astype(np.int64)
    vocab = [f"tok{chr(97 + i)}" for i in range(d)]
    labels = [FOUR if v else NON for v in y]
    return FeatureMatrix(vocab, x), labels


def test_lr_separable_single_feature_weight_positive():
    matrix = FeatureMatrix(["aa"], np.array([[-1.0], [1.0]]))
    model = fit_logistic_regression(matrix, [NON, FOUR], l2_lambda=0.1)
    assert model.weights[0] > 0


def test_lr_large_lambda_shrinks_weights_toward_prior_bias():
    # plain gradient descent crawls for extreme lambda, so the limit is
    # checked at a moderate value plus a shrinkage trend
    matrix = FeatureMatrix(["aa", "bb"], np.random.RandomState(0).randn(40, 2))
    labels = [FOUR] * 10 + [NON] * 30
    weak = fit_logistic_regression(matrix, labels, l2_lambda=0.1, tol=1e-8, max_iters=50000)
    strong = fit_logistic_regression(matrix, labels, l2_lambda=10.0, tol=1e-8, max_iters=50000)
    assert np.abs(strong.weights).max() < 0.02
    assert np.abs(strong.weights).max() < np.abs(weak.weights).max() / 10
    prior = 10 / 40
    assert strong.bias == pytest.approx(math.log(prior / (1 - prior)), abs=1e-3)


def test_lr_gradient_matches_central_differences():
    matrix, labels = fixed_dataset()
    x, _, _ = standardize_columns(matrix.rows)
    y = np.array([1.0 if l is FOUR else 0.0 for l in labels])
    rng = np.random.RandomState(7)
    w = rng.randn(5)
    b = float(rng.randn())
    l2 = 1e-2
    grad_w, grad_b = logistic_gradient(x, y, w, b, l2)
    h = 1e-5
    for i in range(5):
        up, down = w.copy(), w.copy()
        up[i] += h
        down[i] -= h
        fd = (logistic_loss(x, y, up, b, l2) - logistic_loss(x, y, down, b, l2)) / (2 * h)
        rel = abs(fd - grad_w[i]) / max(abs(fd), abs(grad_w[i]), 1e-12)
        assert rel < 1e-6
    fd_b = (logistic_loss(x, y, w, b + h, l2) - logistic_loss(x, y, w, b - h, l2)) / (2 * h)
    assert abs(fd_b - grad_b) / max(abs(fd_b), abs(grad_b), 1e-12) < 1e-6


def newton_reference(x, y, l2, tol=1e-10, max_iter=200):
    """Independent minimizer: damped Newton on the same objective."""
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(max_iter):
        z = x @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        grad_w = x.T @ (p - y) / n + 2 * l2 * w
        grad_b = float(np.mean(p - y))
        if max(np.abs(grad_w).max(), abs(grad_b)) < tol:
            break
        s = p * (1 - p)
        xa = np.hstack([x, np.ones((n, 1))])
        hess = (xa * s[:, None]).T @ xa / n
        hess[:d, :d] += 2 * l2 * np.eye(d)
        hess += 1e-12 * np.eye(d + 1)
        step = np.linalg.solve(hess, np.concatenate([grad_w, [grad_b]]))
        w = w - step[:d]
        b = b - float(step[d])
    return w, b


def test_lr_converged_loss_matches_newton_reference():
    matrix, labels = fixed_dataset()
    model = fit_logistic_regression(matrix, labels, l2_lambda=1e-2, tol=1e-8, max_iters=20000)
    x, _, _ = standardize_columns(matrix.rows)
    y = np.array([1.0 if l is FOUR else 0.0 for l in labels])
    w_ref, b_ref = newton_reference(x, y, 1e-2)
    loss_ref = logistic_loss(x, y, w_ref, b_ref, 1e-2)
    assert model.final_loss == pytest.approx(loss_ref, abs=1e-6)


def test_lr_label_negation_flips_coefficients():
    matrix, labels = fixed_dataset()
    flipped = [NON if l is FOUR else FOUR for l in labels]
    a = fit_logistic_regression(matrix, labels, l2_lambda=1e-2, tol=1e-8, max_iters=20000)
    b = fit_logistic_regression(matrix, flipped, l2_lambda=1e-2, tol=1e-8, max_iters=20000)
    assert np.abs(a.weights + b.weights).max() < 1e-8
    assert abs(a.bias + b.bias) < 1e-8


def test_lr_loss_not_above_zero_weights_loss():
    matrix, labels = fixed_dataset()
    x, _, _ = standardize_columns(matrix.rows)
    y = np.array([1.0 if l is FOUR else 0.0 for l in labels])
    model = fit_logistic_regression(matrix, labels, l2_lambda=1e-2)
    assert model.final_loss <= logistic_loss(x, y, np.zeros(5), 0.0, 1e-2) + 1e-15


def test_lr_not_converged_warning_returns_iterate():
    matrix, labels = fixed_dataset()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_logistic_regression(matrix, labels, max_iters=2, tol=1e-14)
    assert any(issubclass(w.category, NotConverged) for w in caught)
    assert np.all(np.isfinite(model.weights))


def test_lr_constant_column_untouched_by_standardization():
    rows = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    standardized, means, scales = standardize_columns(rows)
    assert np.allclose(standardized[:, 1], 5.0)
    assert means[1] == 0.0 and scales[1] == 1.0


def test_lr_single_class_rejected():
    matrix = FeatureMatrix(["aa"], np.array([[1.0], [2.0]]))
    with pytest.raises(SingleClassLabels):
        fit_logistic_regression(matrix, [FOUR, FOUR])


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def identity_model(vocab, weights, bias=0.0):
    d = len(vocab)
    return ClassifierModel(
        vocabulary=vocab,
        weights=np.asarray(weights, dtype=np.float64),
        bias=bias,
        l2_lambda=0.0,
        feature_means=np.zeros(d),
        feature_scales=np.ones(d),
    )


def test_evaluate_all_correct():
    matrix = binary_matrix([[1], [0], [1], [0]])
    model = identity_model(matrix.vocabulary, [4.0], bias=-2.0)
    metrics = evaluate_classifier(model, matrix, [FOUR, NON, FOUR, NON])
    assert metrics.accuracy == 1.0
    assert metrics.f1 == 1.0


def test_evaluate_confusion_arithmetic():
    # TP=2, FP=1, FN=1, TN=6
    rows = [[1], [1], [1], [0], [0], [0], [0], [0], [0], [0]]
    labels = [FOUR, FOUR, NON, FOUR, NON, NON, NON, NON, NON, NON]
    matrix = binary_matrix(rows)
    model = identity_model(matrix.vocabulary, [4.0], bias=-2.0)
    metrics = evaluate_classifier(model, matrix, labels)
    assert metrics.precision == pytest.approx(2 / 3)
    assert metrics.recall == pytest.approx(2 / 3)
    assert metrics.f1 == pytest.approx(2 / 3)
    assert metrics.accuracy == pytest.approx(0.8)


def test_evaluate_zero_denominator_flagged():
    rows = [[0], [0]]
    labels = [FOUR, NON]
    matrix = binary_matrix(rows)
    model = identity_model(matrix.vocabulary, [4.0], bias=-2.0)
    metrics = evaluate_classifier(model, matrix, labels)
    assert metrics.precision == 0.0
    assert "precision" in metrics.degenerate


# ---------------------------------------------------------------------------
# keyword ranking
# ---------------------------------------------------------------------------

def test_planted_keyword_in_top5_and_max_mi(keyword_corpus):
    corpus = split_corpus(keyword_corpus, (0.8, 0.1, 0.1), seed=3)
    train = corpus.subset("train")
    matrix = build_feature_matrix(train, binarize=True, min_df=5)
    mi = mutual_information(matrix, train.labels())
    assert matrix.vocabulary[int(np.argmax(mi))] == PLANTED_KEYWORD

    model = fit_logistic_regression(matrix, train.labels())
    positive, _ = rank_rigour_keywords(model, mi, percentile=10, top_k=100)
    assert PLANTED_KEYWORD in [k.token for k in positive[:5]]


def test_all_negative_coefficients_empty_positive_list():
    model = identity_model(["aa", "bb"], [-1.0, -2.0])
    positive, negative = rank_rigour_keywords(model, [0.4, 0.6], percentile=100, top_k=10)
    assert positive == []
    assert [k.token for k in negative] == ["bb", "aa"]


def test_rank_restricted_to_percentile():
    model = identity_model(["aa", "bb", "cc", "dd"], [5.0, 4.0, 3.0, 2.0])
    positive, _ = rank_rigour_keywords(model, [0.0, 0.0, 0.9, 0.8], percentile=50, top_k=10)
    assert [k.token for k in positive] == ["cc", "dd"]


def test_predictions_roundtrip(tmp_path):
    path = tmp_path / "preds.jsonl"
    save_label_predictions(path, ["a", "b"], [FOUR, NON], [0.9, 0.2])
    loaded = load_label_predictions(path)
    assert loaded == {"a": FOUR, "b": NON}
