#!/usr/bin/env python3
"""
Testes dos classificadores base: gradientes, contrato de probabilidade,
erros de configuração e persistência.
"""
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import approx_fprime

root_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, root_dir)

from core.errors import ConfigError, DegenerateDataError, DimensionError, LabelError, SchemaError, StochasticityError
from core.features import FeatureMatrix
from learners.base import LearnerKind, LearnerSpec, fit, fit_gbdt, predict_proba, validate_spec
from learners.learner_loader import load_model, save_model
from learners.logreg import logreg_gradient, logreg_loss
from learners.mlp import init_layers, mlp_gradient, mlp_loss

XOR = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_LABELS = ["a", "b", "b", "a"]


def _blobs(n_per_class=15, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    values = np.vstack([c + rng.normal(scale=0.5, size=(n_per_class, 2)) for c in centers])
    labels = [cls for cls in ("x", "y", "z") for _ in range(n_per_class)]
    ids = tuple(f"r{i}" for i in range(len(labels)))
    return FeatureMatrix(ids, ("f0", "f1"), values), labels


def _matrix(values, prefix="r"):
    values = np.asarray(values, dtype=np.float64)
    return FeatureMatrix(tuple(f"{prefix}{i}" for i in range(len(values))),
                         tuple(f"f{j}" for j in range(values.shape[1])), values)


def test_logreg_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(12, 3))
    y = rng.integers(0, 4, size=12)
    theta = rng.normal(size=3 * 4 + 4)
    numeric = approx_fprime(theta, logreg_loss, 1e-6, X, y, 0.01, 4)
    np.testing.assert_allclose(logreg_gradient(theta, X, y, 0.01, 4), numeric, atol=1e-5)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_mlp_gradient_matches_finite_differences(activation):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(10, 3))
    y = rng.integers(0, 3, size=10)
    layers = init_layers(3, (4,), 3, seed=0)
    grads = mlp_gradient(layers, X, y, 0.01, activation)
    eps = 1e-6
    for li, (W, b) in enumerate(layers):
        for arr, grad in ((W, grads[li][0]), (b, grads[li][1])):
            for idx in np.ndindex(arr.shape):
                original = arr[idx]
                arr[idx] = original + eps
                up = mlp_loss(layers, X, y, 0.01, activation)
                arr[idx] = original - eps
                down = mlp_loss(layers, X, y, 0.01, activation)
                arr[idx] = original
                assert abs((up - down) / (2 * eps) - grad[idx]) < 1e-5


@pytest.mark.parametrize("kind", ["logreg", "mlp", "gbdt", "knn"])
def test_probabilities_are_a_simplex(kind):
    X, y = _blobs()
    spec = LearnerSpec(kind=kind, seed=3)
    model = fit(spec, X, y)
    pm = predict_proba(model, X)
    assert pm.classes == ("x", "y", "z")
    np.testing.assert_allclose(pm.values.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(pm.values >= 0)
    accuracy = np.mean(np.array(pm.argmax_labels()) == np.array(y))
    assert accuracy >= 0.9


@pytest.mark.parametrize("kind", ["logreg", "mlp"])
def test_training_loss_never_increases(kind):
    X, y = _blobs(seed=4)
    model = fit(LearnerSpec(kind=kind, hyperparams={"max_iter": 50}), X, y)
    history = model.loss_history
    assert len(history) > 1
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_gbdt_learns_xor():
    spec = LearnerSpec(kind="gbdt", hyperparams={"n_estimators": 50, "max_depth": 2})
    X = _matrix(XOR)
    model = fit_gbdt(spec, X, XOR_LABELS)
    assert predict_proba(model, X).argmax_labels() == XOR_LABELS
    history = model.loss_history
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


def test_gbdt_without_rounds_predicts_the_class_prior():
    rng = np.random.default_rng(7)
    labels = ["a"] * 6 + ["b"] * 3 + ["c"]
    X = _matrix(rng.normal(size=(len(labels), 3)))
    model = fit_gbdt(LearnerSpec(kind="gbdt", hyperparams={"n_estimators": 0}), X, labels)
    probs = predict_proba(model, _matrix(rng.normal(size=(4, 3)), prefix="t"))
    np.testing.assert_allclose(probs.values, np.tile([0.6, 0.3, 0.1], (4, 1)), atol=1e-9)
    assert len(model.loss_history) == 1


def test_fit_gbdt_rejects_other_kinds():
    with pytest.raises(ConfigError):
        fit_gbdt(LearnerSpec(kind="knn"), _matrix(XOR), XOR_LABELS)


def test_knn_one_neighbor_reproduces_training_labels():
    X, y = _blobs(seed=5)
    model = fit(LearnerSpec(kind="knn", hyperparams={"n_neighbors": 1}), X, y)
    assert predict_proba(model, X).argmax_labels() == y


def test_knn_tie_goes_to_lowest_training_index():
    X = _matrix([[0.0], [2.0]])
    model = fit(LearnerSpec(kind="knn", hyperparams={"n_neighbors": 1}), X, ["b", "a"])
    pm = predict_proba(model, _matrix([[1.0]], prefix="q"))
    assert pm.argmax_labels() == ["b"]


def test_fit_is_deterministic_given_seed():
    X, y = _blobs(seed=6)
    spec = LearnerSpec(kind="mlp", hyperparams={"max_iter": 30}, seed=9)
    first = predict_proba(fit(spec, X, y), X).values
    second = predict_proba(fit(spec, X, y), X).values
    np.testing.assert_array_equal(first, second)


def test_explicit_class_order_and_absent_class():
    X, y = _blobs(seed=7)
    model = fit(LearnerSpec(kind="logreg"), X, y, classes=("z", "w", "y", "x"))
    pm = predict_proba(model, X)
    assert pm.classes == ("z", "w", "y", "x")
    with pytest.raises(LabelError):
        fit(LearnerSpec(kind="logreg"), X, y, classes=("x", "y"))


def test_degenerate_training_data():
    with pytest.raises(DegenerateDataError):
        fit(LearnerSpec(kind="logreg"), _matrix([[0.0], [1.0]]), ["a", "a"])
    with pytest.raises(DegenerateDataError):
        fit(LearnerSpec(kind="logreg"), _matrix([[0.0]]), ["a"])
    with pytest.raises(DimensionError):
        fit(LearnerSpec(kind="logreg"), _matrix([[0.0], [1.0]]), ["a"])


def test_predict_requires_training_columns():
    X, y = _blobs()
    model = fit(LearnerSpec(kind="logreg"), X, y)
    renamed = FeatureMatrix(X.ids, ("g0", "g1"), X.values)
    with pytest.raises(DimensionError):
        predict_proba(model, renamed)
    with pytest.raises(DimensionError):
        predict_proba(model, _matrix(np.zeros((2, 3))))


def test_validate_spec():
    merged = validate_spec(LearnerKind.MLP, {"hidden_layer_sizes": [8, 4]})
    assert merged["hidden_layer_sizes"] == (8, 4)
    assert merged["activation"] == "relu"
    with pytest.raises(ConfigError):
        validate_spec(LearnerKind.LOGREG, {"depth": 3})
    with pytest.raises(ConfigError):
        validate_spec(LearnerKind.KNN, {"n_neighbors": 0})
    with pytest.raises(ConfigError):
        validate_spec(LearnerKind.GBDT, {"subsample": 1.5})
    with pytest.raises(ConfigError):
        validate_spec(LearnerKind.EXTERNAL, {})


def test_spec_default_name():
    assert LearnerSpec(kind="gbdt", modality="narrative").name == "gbdt:narrative"
    assert LearnerSpec(kind="gbdt", name="custom").name == "custom"


def _write_predictions(path: Path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_external_predictions_are_realigned():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "preds.csv"
        _write_predictions(path, ["id", "b", "a"], [["r0", 0.25, 0.75], ["r1", 0.6, 0.4]])
        spec = LearnerSpec(kind="external", hyperparams={"path": str(path)})
        X = FeatureMatrix.empty(["r1", "r0"])
        model = fit(spec, X, ["a", "b"], classes=("a", "b"))
        pm = predict_proba(model, X)
    assert pm.ids == ("r1", "r0")
    np.testing.assert_allclose(pm.values, [[0.4, 0.6], [0.75, 0.25]])


def test_external_prediction_errors():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "preds.csv"
        spec = LearnerSpec(kind="external", hyperparams={"path": str(path)})
        X = FeatureMatrix.empty(["r0"])

        _write_predictions(path, ["id", "a", "c"], [["r0", 0.5, 0.5]])
        model = fit(spec, X, ["a"], classes=("a", "b"))
        with pytest.raises(SchemaError):
            predict_proba(model, X)

        path2 = Path(tmp) / "preds2.csv"
        _write_predictions(path2, ["id", "a", "b"], [["r0", 0.9, 0.5]])
        spec2 = LearnerSpec(kind="external", hyperparams={"path": str(path2)})
        with pytest.raises(StochasticityError):
            predict_proba(fit(spec2, X, ["a"], classes=("a", "b")), X)


@pytest.mark.parametrize("kind", ["logreg", "mlp", "gbdt", "knn"])
def test_model_save_load_round_trip(kind):
    X, y = _blobs(seed=8)
    hyperparams = {"logreg": {"max_iter": 20}, "mlp": {"max_iter": 20}, "gbdt": {"n_estimators": 10}}
    model = fit(LearnerSpec(kind=kind, hyperparams=hyperparams.get(kind, {})), X, y)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_model(model, Path(tmp) / "model.json")
        loaded = load_model(path)
    assert loaded.spec == model.spec
    np.testing.assert_allclose(predict_proba(loaded, X).values, predict_proba(model, X).values, atol=1e-12)


def test_load_model_rejects_broken_artifacts():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "model.json"
        path.write_text("{broken", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_model(path)
        path.write_text(json.dumps({"version": 99}), encoding="utf-8")
        with pytest.raises(SchemaError):
            load_model(path)
        path.write_text(json.dumps({"version": 1, "spec": {"kind": "logreg"}}), encoding="utf-8")
        with pytest.raises(SchemaError):
            load_model(path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
