"""
Interface uniforme dos classificadores base: LearnerSpec → fit → FittedModel
→ predict_proba → ProbMatrix.

Cada tipo de learner registra no LearnerRegistry um par (fit, predict) que
trabalha com matrizes numpy e rótulos inteiros; este módulo cuida de
validação, rótulos, alinhamento de colunas e do contrato de simplex.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import ConfigError, DegenerateDataError, DimensionError, LabelError, NonFiniteError
from core.features import FeatureMatrix, ProbMatrix
from learners import gbdt, knn, logreg, mlp
from learners.external import load_external_predictions

logger = logging.getLogger(__name__)


class LearnerKind(str, Enum):
    LOGREG = "logreg"
    MLP = "mlp"
    GBDT = "gbdt"
    KNN = "knn"
    EXTERNAL = "external"


class Modality(str, Enum):
    QUESTIONS = "questions"
    NARRATIVE = "narrative"
    FEATURE_FUSION = "feature_fusion"
    FUSED_TEXT = "fused_text"


# Espaço declarado de hiperparâmetros de cada tipo (nome -> default)
HYPERPARAMS: Dict[LearnerKind, Dict[str, Any]] = {
    LearnerKind.LOGREG: {"l2": 1e-4, "learning_rate": 0.5, "max_iter": 200, "tol": 1e-9},
    LearnerKind.MLP: {
        "hidden_layer_sizes": (50,), "activation": "relu", "alpha": 1e-4,
        "learning_rate_init": 0.1, "max_iter": 200, "tol": 1e-9,
    },
    LearnerKind.GBDT: {
        "n_estimators": 100, "learning_rate": 0.1, "max_depth": 3,
        "min_samples_split": 2, "min_samples_leaf": 1, "subsample": 1.0,
    },
    LearnerKind.KNN: {"n_neighbors": 5, "weights": "uniform", "metric": "euclidean"},
    LearnerKind.EXTERNAL: {"path": None},
}

_POSITIVE_INT = ("max_iter", "n_neighbors", "max_depth", "min_samples_split", "min_samples_leaf")
_POSITIVE_FLOAT = ("learning_rate", "learning_rate_init")
_NONNEGATIVE = ("l2", "alpha", "tol", "n_estimators")


def validate_spec(kind: LearnerKind, hyperparams: Dict[str, Any]) -> Dict[str, Any]:
    """Rejeita chaves fora do espaço do tipo e valores fora de faixa; devolve os hiperparâmetros completos."""
    kind = LearnerKind(kind)
    declared = HYPERPARAMS[kind]
    unknown = sorted(set(hyperparams) - set(declared))
    if unknown:
        raise ConfigError(f"hiperparâmetros desconhecidos para {kind.value}: {unknown}")
    merged = {**declared, **hyperparams}

    for name, value in merged.items():
        if name in _POSITIVE_INT and (not isinstance(value, (int, np.integer)) or value < 1):
            raise ConfigError(f"{kind.value}.{name} precisa ser inteiro >= 1, recebeu {value!r}")
        if name in _POSITIVE_FLOAT and not value > 0:
            raise ConfigError(f"{kind.value}.{name} precisa ser > 0, recebeu {value!r}")
        if name in _NONNEGATIVE and value < 0:
            raise ConfigError(f"{kind.value}.{name} precisa ser >= 0, recebeu {value!r}")
    if kind is LearnerKind.MLP:
        merged["hidden_layer_sizes"] = tuple(int(s) for s in merged["hidden_layer_sizes"])
        if not merged["hidden_layer_sizes"] or min(merged["hidden_layer_sizes"]) < 1:
            raise ConfigError(f"mlp.hidden_layer_sizes inválido: {merged['hidden_layer_sizes']}")
        if merged["activation"] not in mlp.ACTIVATIONS:
            raise ConfigError(f"mlp.activation deve ser uma de {mlp.ACTIVATIONS}")
    if kind is LearnerKind.GBDT and not 0.0 < merged["subsample"] <= 1.0:
        raise ConfigError(f"gbdt.subsample fora de (0, 1]: {merged['subsample']}")
    if kind is LearnerKind.KNN and merged["weights"] not in knn.WEIGHTS:
        raise ConfigError(f"knn.weights deve ser um de {knn.WEIGHTS}")
    if kind is LearnerKind.EXTERNAL and not merged["path"]:
        raise ConfigError("external exige hyperparams.path")
    return merged


class LearnerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LearnerKind
    name: Optional[str] = None
    modality: Modality = Modality.QUESTIONS
    hyperparams: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0

    @model_validator(mode="before")
    @classmethod
    def _default_name(cls, data):
        if isinstance(data, dict) and not data.get("name"):
            kind = LearnerKind(data.get("kind")).value
            modality = Modality(data.get("modality", Modality.QUESTIONS)).value
            data = {**data, "name": f"{kind}:{modality}"}
        return data

    @model_validator(mode="after")
    def _check_hyperparams(self):
        validate_spec(self.kind, self.hyperparams)
        return self

    @property
    def resolved(self) -> Dict[str, Any]:
        return validate_spec(self.kind, self.hyperparams)

    @property
    def is_external(self) -> bool:
        return self.kind is LearnerKind.EXTERNAL


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: LearnerSpec
    class_list: Tuple[str, ...]
    columns: Tuple[str, ...]
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def loss_history(self) -> List[float]:
        return list(self.params.get("loss_history", []))


FitFn = Callable[[np.ndarray, np.ndarray, int, Dict[str, Any], int], Dict[str, Any]]
PredictFn = Callable[[Dict[str, Any], np.ndarray, int, Dict[str, Any]], np.ndarray]


class LearnerRegistry:
    def __init__(self):
        self.learners: Dict[LearnerKind, Tuple[FitFn, PredictFn]] = {}

    def register(self, kind: LearnerKind, fit_fn: FitFn, predict_fn: PredictFn):
        self.learners[LearnerKind(kind)] = (fit_fn, predict_fn)
        logger.debug(f"[LEARNER] {LearnerKind(kind).value} registrado")

    def get(self, kind: LearnerKind) -> Tuple[FitFn, PredictFn]:
        if LearnerKind(kind) not in self.learners:
            raise ConfigError(f"learner não registrado: {kind}")
        return self.learners[LearnerKind(kind)]


def _fit_logreg(X, y, n_classes, hp, seed):
    theta, history = logreg.fit_logreg(X, y, n_classes, hp["l2"], hp["learning_rate"], hp["max_iter"], hp["tol"])
    return {"theta": theta, "loss_history": history}


def _predict_logreg(params, X, n_classes, hp):
    return logreg.predict_logreg(params["theta"], X, n_classes)


def _fit_mlp(X, y, n_classes, hp, seed):
    layers, history = mlp.fit_mlp(
        X, y, n_classes, hp["hidden_layer_sizes"], hp["activation"], hp["alpha"],
        hp["learning_rate_init"], hp["max_iter"], hp["tol"], seed,
    )
    return {"weights": [W for W, _ in layers], "biases": [b for _, b in layers], "loss_history": history}


def _predict_mlp(params, X, n_classes, hp):
    layers = [(np.asarray(W), np.asarray(b)) for W, b in zip(params["weights"], params["biases"])]
    return mlp.predict_mlp(layers, X, hp["activation"])


def _fit_gbdt(X, y, n_classes, hp, seed):
    prior, trees, history = gbdt.fit_gbdt_trees(
        X, y, n_classes, hp["n_estimators"], hp["learning_rate"], hp["max_depth"],
        hp["min_samples_split"], hp["min_samples_leaf"], hp["subsample"], seed,
    )
    return {"prior": prior, "trees": trees, "loss_history": history}


def _predict_gbdt(params, X, n_classes, hp):
    return gbdt.predict_gbdt(params["prior"], params["trees"], X, hp["learning_rate"])


def _fit_knn(X, y, n_classes, hp, seed):
    return {"X_train": X.copy(), "y_train": y.copy()}


def _predict_knn(params, X, n_classes, hp):
    return knn.predict_knn(np.asarray(params["X_train"]), np.asarray(params["y_train"], dtype=np.int64), X,
                           n_classes, hp["n_neighbors"], hp["weights"], hp["metric"])


default_registry = LearnerRegistry()
default_registry.register(LearnerKind.LOGREG, _fit_logreg, _predict_logreg)
default_registry.register(LearnerKind.MLP, _fit_mlp, _predict_mlp)
default_registry.register(LearnerKind.GBDT, _fit_gbdt, _predict_gbdt)
default_registry.register(LearnerKind.KNN, _fit_knn, _predict_knn)


def _encode_labels(y: Sequence[str], classes: Optional[Sequence[str]]) -> Tuple[Tuple[str, ...], np.ndarray]:
    classes = tuple(classes) if classes is not None else tuple(sorted(set(y)))
    index = {c: i for i, c in enumerate(classes)}
    unknown = sorted({label for label in y if label not in index})
    if unknown:
        raise LabelError(f"rótulos fora da lista de classes: {unknown}")
    return classes, np.array([index[label] for label in y], dtype=np.int64)


def fit(spec: LearnerSpec, X: FeatureMatrix, y: Sequence[str], classes: Optional[Sequence[str]] = None,
        registry: LearnerRegistry = default_registry) -> FittedModel:
    """Treina o learner descrito por ``spec``.

    ``classes`` fixa a ordem das colunas de probabilidade; por padrão, os
    rótulos presentes em ``y`` em ordem lexicográfica. Learners externos não
    treinam: o FittedModel apenas aponta para o arquivo de probabilidades.
    """
    hp = spec.resolved
    y = list(y)
    if X.n_rows != len(y):
        raise DimensionError(f"X tem {X.n_rows} linhas e y tem {len(y)} rótulos")
    class_list, y_idx = _encode_labels(y, classes)

    if spec.is_external:
        return FittedModel(spec, class_list, X.columns, {"path": str(hp["path"])})

    if len(y) < 2 or len(set(y)) < 2:
        raise DegenerateDataError(f"{spec.name}: treino precisa de >= 2 registros e >= 2 classes")
    X.check_finite()

    fit_fn, _ = registry.get(spec.kind)
    params = fit_fn(X.values, y_idx, len(class_list), hp, spec.seed)
    history = params.get("loss_history") or []
    if any(b > a + 1e-12 for a, b in zip(history, history[1:])):
        logger.warning(f"[LEARNER] {spec.name}: perda de treino não monotônica")
    logger.info(f"[LEARNER] {spec.name} treinado em {X.n_rows}x{X.n_cols} ({len(class_list)} classes)")
    return FittedModel(spec, class_list, X.columns, params)


def predict_proba(model: FittedModel, X: FeatureMatrix, registry: LearnerRegistry = default_registry) -> ProbMatrix:
    if model.spec.is_external:
        pm = load_external_predictions(model.params["path"], model.class_list)
        return pm.select(X.ids)

    if X.n_cols != len(model.columns):
        raise DimensionError(f"{model.spec.name}: esperado {len(model.columns)} colunas, recebeu {X.n_cols}")
    if X.columns != model.columns:
        raise DimensionError(f"{model.spec.name}: colunas diferentes das usadas no treino")
    X.check_finite()

    _, predict_fn = registry.get(model.spec.kind)
    values = predict_fn(model.params, X.values, len(model.class_list), model.spec.resolved)
    return ProbMatrix(X.ids, model.class_list, values)


def fit_gbdt(spec: LearnerSpec, X: FeatureMatrix, y: Sequence[str], classes: Optional[Sequence[str]] = None) -> FittedModel:
    if spec.kind is not LearnerKind.GBDT:
        raise ConfigError(f"fit_gbdt recebeu um spec do tipo {spec.kind.value}")
    return fit(spec, X, y, classes)
