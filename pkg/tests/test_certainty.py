import inspect
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from rigourkit.certainty import (
    ASPECTS,
    PROB_KEYS,
    CertaintyPrediction,
    HttpCertaintyProvider,
    MockCertaintyProvider,
    SentenceLabel,
    aggregate_certainty,
    filter_labels_to_criteria,
    intersect_criteria,
    label_sentences,
    load_certainty_predictions,
    save_certainty_predictions,
)
from rigourkit.corpus import RigourLabel, Sentence
from rigourkit.criteria import Criterion, CriteriaRegistry
from rigourkit.embed import Embedder, MockEmbeddingProvider
from rigourkit.errors import MissingPrediction

FOUR = RigourLabel.FOUR_STAR
NON = RigourLabel.NON_FOUR_STAR


def registry_pair():
    return CriteriaRegistry(
        [
            Criterion("Kale", "Refers to aaa"),
            Criterion("Mint", "Refers to ccc"),
        ]
    )


def flat_probs(value=0.5):
    return {key: value for key in PROB_KEYS}


def prediction(doc_id, index, **overrides):
    probs = flat_probs()
    probs.update(overrides)
    return CertaintyPrediction(doc_id=doc_id, index=index, probs=probs)


# ---------------------------------------------------------------------------
# sentence labeling
# ---------------------------------------------------------------------------

def test_sentence_identical_to_definition_scores_one_without_offset():
    registry = registry_pair()
    embedder = Embedder(MockEmbeddingProvider(dim=256, offset_scale=0.0))
    sentence = Sentence(doc_id="d", index=0, text="Kale: Refers to aaa")
    labels = label_sentences([sentence], registry, embedder, doc_labels={"d": FOUR})
    assert len(labels) == 1
    assert labels[0].criterion == "Kale"
    assert labels[0].similarity == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_sentence_dropped():
    registry = registry_pair()
    embedder = Embedder(MockEmbeddingProvider(dim=256))
    sentence = Sentence(doc_id="d", index=0, text="zebra quartz lemon")
    labels = label_sentences([sentence], registry, embedder, doc_labels={"d": FOUR})
    assert labels == []


def test_default_threshold_is_half():
    signature = inspect.signature(label_sentences)
    assert signature.parameters["threshold"].default == 0.5


def test_tie_broken_by_registry_order():
    registry = registry_pair()
    embedder = Embedder(MockEmbeddingProvider(dim=256))
    sentence = Sentence(doc_id="d", index=0, text="aaa ccc")
    labels = label_sentences(
        [sentence], registry, embedder, threshold=0.01, doc_labels={"d": NON}
    )
    assert labels[0].criterion == "Kale"

    flipped = CriteriaRegistry(list(reversed(registry.criteria)))
    labels = label_sentences(
        [sentence], flipped, embedder, threshold=0.01, doc_labels={"d": NON}
    )
    assert labels[0].criterion == "Mint"


def test_survivors_meet_threshold():
    registry = registry_pair()
    embedder = Embedder(MockEmbeddingProvider(dim=256))
    sentences = [
        Sentence(doc_id="d", index=0, text="aaa aaa aaa"),
        Sentence(doc_id="d", index=1, text="zebra quartz lemon"),
        Sentence(doc_id="d", index=2, text="aaa zebra quartz lemon puma otter"),
    ]
    labels = label_sentences(
        [s for s in sentences], registry, embedder, threshold=0.5, doc_labels={"d": FOUR}
    )
    assert all(l.similarity >= 0.5 for l in labels)
    assert {l.sentence.index for l in labels} <= {0, 2}


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def _label(doc_id, index, criterion, doc_label):
    return SentenceLabel(
        sentence=Sentence(doc_id=doc_id, index=index, text=f"text {doc_id} {index}"),
        criterion=criterion,
        similarity=0.8,
        doc_label=doc_label,
    )


def test_aggregate_mean_difference_times_100():
    labels = [
        _label("a", 0, "Kale", FOUR),
        _label("a", 1, "Kale", FOUR),
        _label("b", 0, "Kale", NON),
        _label("b", 1, "Kale", NON),
    ]
    predictions = [
        prediction("a", 0, framing_certain=0.8),
        prediction("a", 1, framing_certain=0.6),
        prediction("b", 0, framing_certain=0.5),
        prediction("b", 1, framing_certain=0.5),
    ]
    breakdown = aggregate_certainty(labels, predictions)
    cell = breakdown.cell("Kale", "framing", "certain")
    assert cell.diff == pytest.approx(100 * (0.7 - 0.5), abs=1e-12)
    assert (cell.n_four_star, cell.n_non_four_star) == (2, 2)


def test_aggregate_identical_distributions_zero_everywhere():
    labels = [
        _label("a", 0, "Kale", FOUR),
        _label("b", 0, "Kale", NON),
    ]
    predictions = [prediction("a", 0), prediction("b", 0)]
    breakdown = aggregate_certainty(labels, predictions)
    assert all(cell.diff == 0.0 for cell in breakdown.cells)


def test_aggregate_label_swap_negates_diffs_exactly():
    labels = [
        _label("a", 0, "Kale", FOUR),
        _label("a", 1, "Kale", FOUR),
        _label("b", 0, "Kale", NON),
    ]
    predictions = [
        prediction("a", 0, framing_certain=0.875, number_uncertain=0.25),
        prediction("a", 1, framing_certain=0.125),
        prediction("b", 0, suggestion_certain=0.75),
    ]
    swapped = [
        SentenceLabel(
            sentence=l.sentence,
            criterion=l.criterion,
            similarity=l.similarity,
            doc_label=NON if l.doc_label is FOUR else FOUR,
        )
        for l in labels
    ]
    a = aggregate_certainty(labels, predictions)
    b = aggregate_certainty(swapped, predictions)
    for cell_a, cell_b in zip(a.cells, b.cells):
        assert cell_a.diff == -cell_b.diff


def test_aggregate_constant_shift_leaves_diffs_unchanged():
    # dyadic values keep the check exact
    base = [
        prediction("a", 0, framing_certain=0.5, extent_uncertain=0.25),
        prediction("b", 0, framing_certain=0.25, extent_uncertain=0.125),
    ]
    shifted = [
        CertaintyPrediction(
            doc_id=p.doc_id, index=p.index, probs={k: v + 0.25 for k, v in p.probs.items()}
        )
        for p in base
    ]
    labels = [_label("a", 0, "Kale", FOUR), _label("b", 0, "Kale", NON)]
    a = aggregate_certainty(labels, base)
    b = aggregate_certainty(labels, shifted)
    for cell_a, cell_b in zip(a.cells, b.cells):
        assert cell_a.diff == cell_b.diff


def test_aggregate_missing_prediction_raises():
    labels = [_label("a", 0, "Kale", FOUR), _label("a", 1, "Kale", NON)]
    with pytest.raises(MissingPrediction):
        aggregate_certainty(labels, [prediction("a", 0)])


def test_aggregate_missing_class_flagged_not_zero_filled():
    labels = [_label("a", 0, "Kale", FOUR)]
    breakdown = aggregate_certainty(labels, [prediction("a", 0)])
    cell = breakdown.cell("Kale", "framing", "certain")
    assert cell.diff is None
    assert cell.missing_class == "non-4*"


def test_aggregate_sentence_counts():
    labels = [
        _label("a", 0, "Kale", FOUR),
        _label("a", 1, "Mint", FOUR),
        _label("b", 0, "Kale", NON),
    ]
    predictions = [prediction("a", 0), prediction("a", 1), prediction("b", 0)]
    breakdown = aggregate_certainty(labels, predictions)
    assert breakdown.sentence_counts == {"Kale": 2, "Mint": 1}
    assert sum(breakdown.sentence_counts.values()) == len(labels)


def test_grid_shape_covers_all_aspects():
    labels = [_label("a", 0, "Kale", FOUR), _label("b", 0, "Kale", NON)]
    breakdown = aggregate_certainty(labels, [prediction("a", 0), prediction("b", 0)])
    grid = breakdown.grid("certain")
    assert set(grid["Kale"]) == set(ASPECTS)


# ---------------------------------------------------------------------------
# prediction plumbing
# ---------------------------------------------------------------------------

def test_prediction_validation():
    with pytest.raises(ValueError):
        CertaintyPrediction(doc_id="a", index=0, probs={"framing_certain": 0.5})
    bad = flat_probs()
    bad["framing_certain"] = 1.5
    with pytest.raises(ValueError):
        CertaintyPrediction(doc_id="a", index=0, probs=bad)


def test_predictions_jsonl_roundtrip(tmp_path):
    path = tmp_path / "preds.jsonl"
    originals = [prediction("a", 0, framing_certain=0.9), prediction("b", 3)]
    save_certainty_predictions(originals, path)
    loaded = load_certainty_predictions(path)
    assert [(p.doc_id, p.index) for p in loaded] == [("a", 0), ("b", 3)]
    assert loaded[0].probs["framing_certain"] == 0.9
    record = json.loads(path.read_text().splitlines()[0])
    assert set(record) == {"doc_id", "index", "probs"}
    assert set(record["probs"]) == set(PROB_KEYS)


def test_mock_certainty_provider_deterministic():
    provider = MockCertaintyProvider()
    sentences = [Sentence(doc_id="d", index=0, text="alpha beta gamma")]
    a = provider.predict(sentences)
    b = provider.predict(sentences)
    assert a[0].probs == b[0].probs
    assert set(a[0].probs) == set(PROB_KEYS)


class _CertaintyHandler(BaseHTTPRequestHandler):
    requests: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests.append(body)
        predictions = [
            {"doc_id": s["doc_id"], "index": s["index"], "probs": {k: 0.5 for k in PROB_KEYS}}
            for s in body["sentences"]
        ]
        payload = json.dumps({"predictions": predictions}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def test_http_certainty_provider_wire_contract():
    _CertaintyHandler.requests = []
    server = HTTPServer(("127.0.0.1", 0), _CertaintyHandler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        provider = HttpCertaintyProvider(
            f"http://127.0.0.1:{server.server_port}", backoff_base=0.0
        )
        sentences = [Sentence(doc_id="d9", index=2, text="the finding holds")]
        predictions = provider.predict(sentences)
        assert _CertaintyHandler.requests[0] == {
            "sentences": [{"doc_id": "d9", "index": 2, "text": "the finding holds"}]
        }
        assert predictions[0].key == ("d9", 2)
        assert set(predictions[0].probs) == set(PROB_KEYS)
    finally:
        server.shutdown()


def test_intersect_criteria_preserves_first_run_order():
    assert intersect_criteria(["B", "A", "C"], ["C", "B"], ["B", "C", "D"]) == ["B", "C"]


def test_filter_labels_to_criteria():
    labels = [_label("a", 0, "Kale", FOUR), _label("a", 1, "Mint", FOUR)]
    assert [l.criterion for l in filter_labels_to_criteria(labels, ["Mint"])] == ["Mint"]
