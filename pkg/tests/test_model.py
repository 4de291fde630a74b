import math

import numpy as np
import pytest

from textcredit.metrics import ScoredSet, auc
from textcredit.model import (
    MlpConfig,
    MlpModel,
    assemble,
    bce_loss,
    gradient_check,
    grid_search,
    model_from_json,
    model_to_json,
    predict_proba,
    train,
)
from textcredit.tabular import EncodedMatrix
from textcredit.textfeat import DocFeatures


def block(source, ids, matrix):
    return [
        DocFeatures(id=rid, source=source, values=row)
        for rid, row in zip(ids, np.asarray(matrix, dtype=float))
    ]


def structured_matrix(ids, n_cols=3, seed=0):
    rng = np.random.default_rng(seed)
    return EncodedMatrix(
        ids=tuple(ids),
        columns=tuple(f"f{j}" for j in range(n_cols)),
        values=rng.standard_normal((len(ids), n_cols)),
    )


class TestAssemble:
    def test_combined_width(self):
        ids = [f"L{i}" for i in range(4)]
        s = structured_matrix(ids, 18)
        t = block("lda", ids, np.random.default_rng(1).random((4, 30)))
        out = assemble("combined", structured=s, texts=[t])
        assert len(out.columns) == 48
        assert out.columns[0] == "structured:f0"
        assert out.columns[18] == "lda:0"

    def test_two_text_sources_concatenate(self):
        ids = [f"L{i}" for i in range(3)]
        rng = np.random.default_rng(2)
        a = block("docvec:human", ids, rng.random((3, 768)))
        b = block("docvec:refined", ids, rng.random((3, 768)))
        out = assemble("text", texts=[a, b])
        assert len(out.columns) == 1536

    def test_structured_ignores_texts(self):
        ids = [f"L{i}" for i in range(4)]
        s = structured_matrix(ids, 18)
        t = block("lda", ids, np.ones((4, 5)))
        out = assemble("structured", structured=s, texts=[t])
        assert len(out.columns) == 18

    def test_alignment_by_id(self):
        ids = ["a", "b", "c"]
        s = structured_matrix(ids, 2)
        shuffled = block("tfidf", ["c", "a", "b"], [[3.0], [1.0], [2.0]])
        out = assemble("combined", structured=s, texts=[shuffled])
        assert out.values[:, 2].tolist() == [1.0, 2.0, 3.0]

    def test_row_mismatch(self):
        s = structured_matrix(["a", "b"], 2)
        t = block("tfidf", ["a", "x"], [[1.0], [2.0]])
        with pytest.raises(ValueError, match="different record ids"):
            assemble("combined", structured=s, texts=[t])

    def test_missing_source_for_variant(self):
        with pytest.raises(ValueError, match="text source"):
            assemble("text", texts=[])


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack(
        [rng.standard_normal((n // 2, 2)) + 3.0, rng.standard_normal((n // 2, 2)) - 3.0]
    )
    y = np.array([1] * (n // 2) + [0] * (n // 2))
    perm = rng.permutation(n)
    return X[perm], y[perm]


class TestTrain:
    def test_bce_fixtures(self):
        assert bce_loss(np.array([1.0]), np.array([1.0])) == 0.0
        assert bce_loss(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(
            math.log(2.0), abs=1e-12
        )

    def test_separable_blobs_logistic(self):
        X, y = blobs()
        cfg = MlpConfig(hidden=(), max_epochs=500, patience=500, seed=0)
        model, report = train(X[:150], y[:150], X[150:], y[150:], cfg)
        p = predict_proba(model, X[:150])
        s = ScoredSet(scores=p, labels=y[:150], ids=tuple(map(str, range(150))))
        assert auc(s) >= 0.99
        assert report.val_losses[report.best_epoch] == report.final_val_loss
        assert report.final_val_loss == min(report.val_losses)

    def test_single_class_rejected(self):
        X = np.zeros((4, 2))
        with pytest.raises(ValueError, match="single-class"):
            train(X, [1, 1, 1, 1], X, [1, 1, 1, 1], MlpConfig())

    def test_determinism_bitwise(self):
        X, y = blobs(80, seed=3)
        cfg = MlpConfig(hidden=(8,), max_epochs=30, patience=30, seed=9)
        m1, r1 = train(X[:60], y[:60], X[60:], y[60:], cfg)
        m2, r2 = train(X[:60], y[:60], X[60:], y[60:], cfg)
        assert all(np.array_equal(a, b) for a, b in zip(m1.weights, m2.weights))
        assert all(np.array_equal(a, b) for a, b in zip(m1.biases, m2.biases))
        assert r1 == r2

    def test_full_batch_sgd_loss_non_increasing(self):
        X, y = blobs(60, seed=4)
        cfg = MlpConfig(
            hidden=(),
            optimizer="sgd",
            learning_rate=0.01,
            batch_size=60,
            max_epochs=60,
            patience=60,
            seed=0,
        )
        _, report = train(X, y, X, y, cfg)
        losses = np.array(report.train_losses)
        assert np.all(np.diff(losses) <= 1e-12)


class TestPredict:
    def test_zero_weights_give_half(self):
        model = MlpModel(
            weights=[np.zeros((3, 1))], biases=[np.zeros(1)], columns=("a", "b", "c")
        )
        p = predict_proba(model, np.ones((5, 3)))
        assert np.allclose(p, 0.5)

    def test_logistic_closed_form(self):
        w = np.array([[0.7], [-1.2]])
        b = np.array([0.3])
        model = MlpModel(weights=[w], biases=[b], columns=("x0", "x1"))
        X = np.random.default_rng(0).standard_normal((10, 2))
        expected = 1 / (1 + np.exp(-(X @ w[:, 0] + b[0])))
        assert np.allclose(predict_proba(model, X), expected, atol=1e-15)

    def test_outputs_strictly_inside_unit_interval(self):
        w = np.array([[100.0]])
        model = MlpModel(weights=[w], biases=[np.zeros(1)], columns=("x0",))
        p = predict_proba(model, np.array([[10.0], [-10.0]]))
        assert 0.0 < p.min() and p.max() < 1.0

    def test_row_permutation_equivariance(self):
        X, y = blobs(40, seed=5)
        model, _ = train(X[:30], y[:30], X[30:], y[30:], MlpConfig(hidden=(4,), max_epochs=5, seed=0))
        p = predict_proba(model, X)
        perm = np.random.default_rng(1).permutation(len(X))
        assert np.allclose(predict_proba(model, X[perm]), p[perm])

    def test_column_mismatch(self):
        ids = ("a", "b")
        m = EncodedMatrix(ids=ids, columns=("p", "q"), values=np.zeros((2, 2)))
        model = MlpModel(weights=[np.zeros((2, 1))], biases=[np.zeros(1)], columns=("x", "y"))
        with pytest.raises(ValueError, match="columns"):
            predict_proba(model, m)

    def test_zero_weight_column_invariance(self):
        w = np.array([[0.5], [0.0]])
        model2 = MlpModel(weights=[w], biases=[np.zeros(1)], columns=("x", "pad"))
        model1 = MlpModel(weights=[w[:1]], biases=[np.zeros(1)], columns=("x",))
        X = np.random.default_rng(2).standard_normal((6, 1))
        X2 = np.column_stack([X, np.zeros(6)])
        assert np.allclose(predict_proba(model1, X), predict_proba(model2, X2))


class TestGridSearch:
    def test_single_config(self):
        X, y = blobs(60, seed=6)
        cfg = MlpConfig(hidden=(), max_epochs=5, seed=0)
        best, _, reports = grid_search([cfg], X[:40], y[:40], X[40:], y[40:])
        assert best == cfg
        assert len(reports) == 1

    def test_duplicate_tie_goes_first(self):
        X, y = blobs(60, seed=7)
        cfg = MlpConfig(hidden=(), max_epochs=5, seed=0)
        best, _, _ = grid_search([cfg, cfg], X[:40], y[:40], X[40:], y[40:])
        assert best is not None  # ties resolved without error, first wins
        assert best == cfg

    def test_rigged_winner(self):
        # one config gets enough epochs to fit, the other is frozen at init
        X, y = blobs(120, seed=8)
        frozen = MlpConfig(hidden=(), max_epochs=1, learning_rate=1e-9, seed=0)
        fitted = MlpConfig(hidden=(), max_epochs=200, patience=200, seed=0)
        best, _, _ = grid_search([frozen, fitted], X[:90], y[:90], X[90:], y[90:])
        assert best == fitted


class TestGradientCheck:
    def test_logistic_single_sample(self):
        err = gradient_check(
            MlpConfig(hidden=(), seed=0), np.array([[2.0]]), np.array([1.0])
        )
        assert err <= 1e-6

    def test_two_hidden_layers(self):
        rng = np.random.default_rng(1)
        err = gradient_check(
            MlpConfig(hidden=(16, 8), seed=2),
            rng.standard_normal((8, 6)),
            rng.integers(0, 2, 8),
        )
        assert err <= 1e-4

    def test_eps_second_order(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((4, 3))
        y = rng.integers(0, 2, 4)
        cfg = MlpConfig(hidden=(5,), seed=3)
        e1 = gradient_check(cfg, X, y, eps=1e-5)
        e2 = gradient_check(cfg, X, y, eps=5e-6)
        assert e2 <= 4 * e1 + 1e-9


class TestSerialization:
    def test_roundtrip(self):
        X, y = blobs(40, seed=9)
        model, _ = train(
            X[:30], y[:30], X[30:], y[30:], MlpConfig(hidden=(4,), max_epochs=5, seed=0)
        )
        clone = model_from_json(model_to_json(model))
        assert clone.columns == model.columns
        assert np.allclose(predict_proba(clone, X), predict_proba(model, X))

    def test_version_gate(self):
        blob = model_to_json(
            MlpModel(weights=[np.zeros((1, 1))], biases=[np.zeros(1)], columns=("x",))
        )
        tampered = blob.replace('"format_version": 1', '"format_version": 99')
        with pytest.raises(ValueError, match="format"):
            model_from_json(tampered)
