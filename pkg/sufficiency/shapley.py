"""
Valores de Shapley de um modelo em relação a uma linha de referência.

Coalizões ausentes recebem o valor da referência (por padrão a média de
treino). Até EXACT_MAX_FEATURES atributos a conta é exata, sobre todas as
coalizões; acima disso usa permutações amostradas. Em ambos os casos a soma
dos valores é f(x) - f(referência).
"""
import logging
import math
from itertools import product
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.errors import DimensionError, VaForgeError
from core.features import FeatureMatrix
from learners.base import FittedModel, predict_proba

logger = logging.getLogger(__name__)

EXACT_MAX_FEATURES = 8

ValueFn = Callable[[np.ndarray], np.ndarray]


def _exact(f: ValueFn, x: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    d = len(x)
    masks = np.array(list(product([0, 1], repeat=d)), dtype=bool)
    rows = np.where(masks, x, baseline)
    values = np.asarray(f(rows), dtype=np.float64)
    # índice de cada coalizão no produto cartesiano (bit mais significativo = atributo 0)
    powers = 1 << np.arange(d - 1, -1, -1)
    index = masks.astype(np.int64) @ powers
    lookup = np.empty(len(values))
    lookup[index] = values
    sizes = masks.sum(axis=1)
    weights = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) if s < d else 0.0
                        for s in sizes])

    phi = np.zeros(d)
    for j in range(d):
        without = ~masks[:, j]
        gain = lookup[index[without] + powers[j]] - lookup[index[without]]
        phi[j] = float(np.sum(weights[without] * gain))
    return phi


def _permutation_chunk(f: ValueFn, x: np.ndarray, baseline: np.ndarray, seeds) -> np.ndarray:
    d = len(x)
    total = np.zeros(d)
    for seed in seeds:
        order = np.random.default_rng(seed).permutation(d)
        rows = np.tile(baseline, (d + 1, 1))
        for step, j in enumerate(order):
            rows[step + 1:, j] = x[j]
        values = np.asarray(f(rows), dtype=np.float64)
        total[order] += np.diff(values)
    return total


def shapley_values(f: ValueFn, x: np.ndarray, baseline: np.ndarray, n_samples: int = 200, seed: int = 0,
                   n_jobs: int = 1, exact_max: int = EXACT_MAX_FEATURES) -> np.ndarray:
    """Valores de Shapley de ``f`` (linhas -> escalar) no ponto ``x``.

    A permutação ``p`` usa ``default_rng(seed + p)``; os blocos paralelos são
    somados em ordem fixa.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    baseline = np.asarray(baseline, dtype=np.float64).ravel()
    if x.shape != baseline.shape:
        raise DimensionError(f"x tem {x.size} atributos e a referência {baseline.size}")
    if x.size == 0:
        return np.zeros(0)
    if x.size <= exact_max:
        return _exact(f, x, baseline)
    if n_samples < 1:
        raise VaForgeError("n_samples deve ser >= 1")

    seeds = [seed + p for p in range(n_samples)]
    n_chunks = max(1, min(n_jobs if n_jobs > 0 else 1, n_samples))
    chunks = [seeds[i::n_chunks] for i in range(n_chunks)]
    parts = Parallel(n_jobs=n_jobs)(delayed(_permutation_chunk)(f, x, baseline, chunk) for chunk in chunks)
    total = np.zeros_like(x)
    for part in parts:
        total += part
    return total / n_samples


def _predicted_class_fn(model: FittedModel, columns, class_index: int) -> ValueFn:
    def f(rows: np.ndarray) -> np.ndarray:
        ids = tuple(f"z{i}" for i in range(len(rows)))
        return predict_proba(model, FeatureMatrix(ids, tuple(columns), rows)).values[:, class_index]
    return f


def shapley_matrix(model: FittedModel, X: FeatureMatrix, baseline: Optional[np.ndarray] = None,
                   n_samples: int = 200, seed: int = 0, n_jobs: int = 1,
                   train: Optional[FeatureMatrix] = None) -> np.ndarray:
    """Matriz (linhas de X, atributos) com o valor de Shapley da probabilidade da classe predita."""
    if baseline is None:
        reference = train if train is not None else X
        if train is None:
            logger.warning("[SHAPLEY] Sem matriz de treino: referência = média das linhas avaliadas")
        baseline = reference.values.mean(axis=0)
    predicted = predict_proba(model, X).argmax_indices()
    out = np.zeros((X.n_rows, X.n_cols))
    for i, (row, c) in enumerate(zip(X.values, predicted)):
        f = _predicted_class_fn(model, X.columns, int(c))
        out[i] = shapley_values(f, row, baseline, n_samples=n_samples, seed=seed + i, n_jobs=n_jobs)
    logger.info(f"[SHAPLEY] {X.n_rows} linhas x {X.n_cols} atributos explicadas ({model.spec.name})")
    return out


def shapley_importance(model: FittedModel, X: FeatureMatrix, baseline: Optional[np.ndarray] = None,
                       n_samples: int = 200, seed: int = 0, n_jobs: int = 1,
                       train: Optional[FeatureMatrix] = None) -> pd.DataFrame:
    """Importância por atributo: média de |Shapley| nas linhas de X, com rank (1 = mais importante)."""
    values = shapley_matrix(model, X, baseline, n_samples, seed, n_jobs, train)
    return importance_frame(X.columns, np.abs(values).mean(axis=0))


def importance_frame(features, scores: np.ndarray, column: str = "mean_abs_shapley") -> pd.DataFrame:
    frame = pd.DataFrame({"feature": list(features), column: np.asarray(scores, dtype=np.float64)})
    frame = frame.sort_values([column, "feature"], ascending=[False, True], kind="mergesort").reset_index(drop=True)
    frame["rank"] = np.arange(1, len(frame) + 1)
    return frame


def write_importance_report(frame: pd.DataFrame, path: Union[str, Path], top: Optional[int] = None) -> Path:
    """CSV ``feature,<score>,rank``; ``top`` limita às primeiras linhas."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = frame.head(top) if top else frame
    out.to_csv(path, index=False, float_format="%.6f", encoding="utf-8", lineterminator="\n")
    logger.info(f"[SHAPLEY] Importâncias salvas em {path}")
    return path
