import json

import numpy as np
import pytest

from scat import (
    ClassifierConfig,
    SoftmaxClassifier,
    encode_matrix,
    evaluate,
    export_embeddings,
    extract_topics,
    init_params,
    matrix_from_docs,
    report_from_predictions,
    train_classifier,
)
from conftest import make_vocab


class TestEncodeMatrix:
    def test_empty_rows_encode_to_tanh_bias(self):
        vocab = make_vocab(["a", "b"])
        m = matrix_from_docs([[], []], vocab, "log_normalized_tf")
        p = init_params(v=2, h=3, variant="none", seed=0)
        p.b[:] = np.array([0.5, -0.5, 0.0], dtype=p.dtype)
        F = encode_matrix(m, p)
        assert np.allclose(F, np.tanh(p.b), atol=1e-7)

    def test_identical_documents_identical_encodings(self):
        vocab = make_vocab(["a", "b", "c"])
        m = matrix_from_docs([["a", "b"], ["a", "b"]], vocab, "log_normalized_tf")
        p = init_params(v=3, h=4, variant="scat", k=2, seed=1)
        F = encode_matrix(m, p)
        assert np.array_equal(F[0], F[1])

    def test_competition_at_inference_caps_positives(self):
        rng = np.random.default_rng(0)
        vocab = make_vocab([f"w{i}" for i in range(12)])
        docs = [[f"w{i}" for i in rng.integers(0, 12, size=8)] for _ in range(20)]
        m = matrix_from_docs(docs, vocab, "log_normalized_tf")
        p = init_params(v=12, h=6, variant="scat", k=2, seed=2)
        F_plain = encode_matrix(m, p, competition_at_inference=False)
        F_comp = encode_matrix(m, p, competition_at_inference=True)
        for i in range(m.n):
            assert np.count_nonzero(F_comp[i] > 0) <= 2
            neg = F_plain[i] <= 0
            assert np.allclose(F_comp[i][neg], F_plain[i][neg], atol=1e-7)

    def test_concatenation_property_without_competition(self):
        vocab = make_vocab([f"w{i}" for i in range(5)])
        docs = [["w0", "w1"], ["w2"], ["w3", "w4", "w0"]]
        m_all = matrix_from_docs(docs, vocab, "log_normalized_tf")
        m_a = matrix_from_docs(docs[:2], vocab, "log_normalized_tf")
        m_b = matrix_from_docs(docs[2:], vocab, "log_normalized_tf")
        p = init_params(v=5, h=3, variant="none", seed=3)
        stacked = np.vstack([encode_matrix(m_a, p), encode_matrix(m_b, p)])
        assert np.array_equal(encode_matrix(m_all, p), stacked)

    def test_width_mismatch(self):
        vocab = make_vocab(["a"])
        m = matrix_from_docs([["a"]], vocab, "binary")
        with pytest.raises(ValueError):
            encode_matrix(m, init_params(v=2, h=2, variant="none"))


class TestExtractTopics:
    def params_with_W(self, W):
        from scat import ModelParams

        W = np.asarray(W, dtype=np.float64)
        h, v = W.shape
        return ModelParams(W, np.zeros(h), np.zeros(v), variant="none")

    def test_single_neuron_ranking(self):
        p = self.params_with_W([[0.1, 0.9, 0.5]])
        topics = extract_topics(p, ["a", "b", "c"], top_n=2)
        assert topics == [[("b", 0.9), ("c", 0.5)]]

    def test_top_n_equals_v_is_permutation(self):
        p = self.params_with_W([[0.3, -0.1, 0.7, 0.0]])
        topics = extract_topics(p, ["a", "b", "c", "d"], top_n=4)
        assert [t for t, _ in topics[0]] == ["c", "a", "d", "b"]

    def test_positive_rescaling_invariance(self):
        W = np.random.default_rng(4).normal(size=(3, 6))
        p1 = self.params_with_W(W)
        p2 = self.params_with_W(W * 7.5)
        vocab = [f"w{i}" for i in range(6)]
        t1 = extract_topics(p1, vocab, top_n=3)
        t2 = extract_topics(p2, vocab, top_n=3)
        assert [[tok for tok, _ in t] for t in t1] == [[tok for tok, _ in t] for t in t2]

    def test_tie_breaks_to_lower_index(self):
        p = self.params_with_W([[0.5, 0.5, 0.1]])
        topics = extract_topics(p, ["a", "b", "c"], top_n=2)
        assert [tok for tok, _ in topics[0]] == ["a", "b"]

    def test_top_n_too_large(self):
        p = self.params_with_W([[0.1, 0.2]])
        with pytest.raises(ValueError):
            extract_topics(p, ["a", "b"], top_n=3)


class TestTrainClassifier:
    def test_linearly_separable_reaches_full_accuracy(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(loc=(-2, 0), scale=0.3, size=(30, 2)),
                       rng.normal(loc=(2, 0), scale=0.3, size=(30, 2))])
        y = np.array([0] * 30 + [1] * 30)
        clf = train_classifier(X, y, ClassifierConfig(iters=300, learning_rate=0.5))
        assert (clf.predict(X) == y).mean() == 1.0

    def test_identical_features_predict_majority(self):
        X = np.ones((10, 3))
        y = np.array([0, 0, 0, 0, 0, 0, 0, 1, 1, 1])
        clf = train_classifier(X, y, ClassifierConfig(iters=200, learning_rate=0.2))
        assert np.all(clf.predict(X) == 0)

    def test_full_batch_is_order_free(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 3, size=40)
        y[:3] = [0, 1, 2]  # every class present
        perm = rng.permutation(40)
        clf1 = train_classifier(X, y, ClassifierConfig(iters=50))
        clf2 = train_classifier(X[perm], y[perm], ClassifierConfig(iters=50))
        # mathematically identical; fp summation order differs at ulp level
        assert np.allclose(clf1.W, clf2.W, rtol=0, atol=1e-10)
        assert np.allclose(clf1.b, clf2.b, rtol=0, atol=1e-10)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            train_classifier(np.ones((4, 2)), np.zeros(4, dtype=int))


class TestEvaluate:
    def test_perfect_predictions(self):
        report = report_from_predictions([0, 1, 2], [0, 1, 2], 3)
        assert report.macro_precision == 1.0
        assert report.macro_recall == 1.0
        assert report.macro_f1 == 1.0
        assert report.accuracy == 1.0

    def test_hand_computed_two_class_case(self):
        # confusion [[1, 1], [0, 2]]
        y_true = [0, 0, 1, 1]
        y_pred = [0, 1, 1, 1]
        report = report_from_predictions(y_pred, y_true, 2)
        assert report.confusion.tolist() == [[1, 1], [0, 2]]
        c0, c1 = report.per_class
        assert c0["precision"] == pytest.approx(1.0)
        assert c0["recall"] == pytest.approx(0.5)
        assert c0["f1"] == pytest.approx(2 / 3)
        assert c1["precision"] == pytest.approx(2 / 3)
        assert c1["recall"] == pytest.approx(1.0)
        assert c1["f1"] == pytest.approx(0.8)
        assert report.macro_f1 == pytest.approx((2 / 3 + 0.8) / 2)
        assert report.accuracy == pytest.approx(0.75)

    def test_zero_denominators_score_zero(self):
        # class 1 never predicted and never true -> P = R = F1 = 0 for it
        report = report_from_predictions([0, 0], [0, 0], 2)
        assert report.per_class[1] == {"precision": 0.0, "recall": 0.0, "f1": 0.0, "support": 0}

    def test_macro_invariant_under_relabeling(self):
        rng = np.random.default_rng(2)
        y_true = rng.integers(0, 4, size=100)
        y_pred = rng.integers(0, 4, size=100)
        base = report_from_predictions(y_pred, y_true, 4)
        perm = np.array([2, 3, 1, 0])
        relabeled = report_from_predictions(perm[y_pred], perm[y_true], 4)
        assert relabeled.macro_f1 == pytest.approx(base.macro_f1)
        assert relabeled.macro_precision == pytest.approx(base.macro_precision)
        assert relabeled.macro_recall == pytest.approx(base.macro_recall)

    def test_internal_consistency(self):
        rng = np.random.default_rng(3)
        y_true = rng.integers(0, 3, size=60)
        y_pred = rng.integers(0, 3, size=60)
        report = report_from_predictions(y_pred, y_true, 3)
        assert report.accuracy == pytest.approx(np.trace(report.confusion) / 60)
        for cid in range(3):
            assert report.confusion[cid].sum() == (y_true == cid).sum()
            assert report.per_class[cid]["support"] == (y_true == cid).sum()

    def test_json_schema_field_names(self):
        report = report_from_predictions([0, 1], [0, 1], 2, class_names=["x", "y"])
        doc = json.loads(report.to_json())
        assert set(doc) == {"per_class", "macro_precision", "macro_recall",
                            "macro_f1", "accuracy", "confusion"}
        assert doc["per_class"][0]["class"] == "x"

    def test_evaluate_via_classifier(self):
        # identity features + identity weights = predict the feature argmax
        clf = SoftmaxClassifier(W=np.eye(3), b=np.zeros(3))
        X = np.eye(3)[[0, 1, 2, 2]]
        report = evaluate(clf, X, [0, 1, 2, 2])
        assert report.accuracy == 1.0

    def test_argmax_tie_goes_to_lower_class(self):
        clf = SoftmaxClassifier(W=np.zeros((3, 2)), b=np.zeros(3))
        report = evaluate(clf, np.ones((5, 2)), [2] * 5)
        assert np.all(report.confusion[2] == [5, 0, 0])


class TestExportEmbeddings:
    def test_line_count_and_header(self, tmp_path):
        path = tmp_path / "emb.tsv"
        export_embeddings(np.array([[0.123456789, -1.5]]), np.array([3]), ["d1"], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        header = lines[0].split("\t")
        assert header == ["doc_id", "label", "f0", "f1"]

    def test_round_trip_six_significant_digits(self, tmp_path):
        rng = np.random.default_rng(5)
        F = rng.normal(size=(10, 4)).astype(np.float32)
        path = tmp_path / "emb.tsv"
        export_embeddings(F, np.arange(10), [f"d{i}" for i in range(10)], path)
        lines = path.read_text().splitlines()[1:]
        assert len(lines) == 10
        for i, line in enumerate(lines):
            fields = line.split("\t")
            assert fields[0] == f"d{i}"
            assert int(fields[1]) == i
            got = np.array([float(x) for x in fields[2:]])
            assert np.allclose(got, F[i], rtol=1e-5)

    def test_unlabeled_rows_get_minus_one(self, tmp_path):
        path = tmp_path / "emb.tsv"
        export_embeddings(np.zeros((2, 2)), None, ["a", "b"], path)
        for line in path.read_text().splitlines()[1:]:
            assert line.split("\t")[1] == "-1"
