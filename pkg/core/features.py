"""
Contêineres numéricos compartilhados entre os módulos: FeatureMatrix
(atributos com colunas nomeadas) e ProbMatrix (probabilidades por registro).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import AlignmentError, DimensionError, DuplicateIdError, NonFiniteError, SchemaError, StochasticityError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-6

# Codificação tabular: Yes=1, No=0, DontKnow/Missing=0.5 (+ coluna de ausência)
RESPONSE_VALUES = {"Yes": 1.0, "No": 0.0, "DontKnow": 0.5, "Missing": 0.5}
MISSING_SUFFIX = ":missing"


def _check_unique(values: Sequence[str], what: str, error=DuplicateIdError):
    seen = set()
    for v in values:
        if v in seen:
            raise error(f"{what} duplicado: '{v}'")
        seen.add(v)


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    ids: Tuple[str, ...]
    columns: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "columns", tuple(self.columns))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1 and len(self.columns) == 0:
            values = values.reshape(len(self.ids), 0)
        if values.ndim != 2:
            raise DimensionError(f"FeatureMatrix precisa ser 2D, recebeu ndim={values.ndim}")
        if values.shape != (len(self.ids), len(self.columns)):
            raise DimensionError(
                f"FeatureMatrix com forma {values.shape} incompatível com "
                f"{len(self.ids)} ids e {len(self.columns)} colunas"
            )
        _check_unique(self.ids, "id")
        _check_unique(self.columns, "coluna", SchemaError)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @classmethod
    def empty(cls, ids: Sequence[str]) -> "FeatureMatrix":
        return cls(tuple(ids), (), np.zeros((len(ids), 0)))

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("FeatureMatrix contém NaN ou Inf")

    def row_index(self) -> Dict[str, int]:
        return {rid: i for i, rid in enumerate(self.ids)}

    def select(self, ids: Sequence[str]) -> "FeatureMatrix":
        index = self.row_index()
        missing = [rid for rid in ids if rid not in index]
        if missing:
            raise AlignmentError(f"ids ausentes na FeatureMatrix: {missing[:5]}")
        rows = [index[rid] for rid in ids]
        return FeatureMatrix(tuple(ids), self.columns, self.values[rows])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.Index(self.ids, name="id"), columns=list(self.columns))


@dataclass(frozen=True, eq=False)
class ProbMatrix:
    ids: Tuple[str, ...]
    classes: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "classes", tuple(self.classes))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1 and len(self.ids) == 0:
            values = values.reshape(0, len(self.classes))
        if values.shape != (len(self.ids), len(self.classes)):
            raise DimensionError(
                f"ProbMatrix com forma {values.shape} incompatível com "
                f"{len(self.ids)} ids e {len(self.classes)} classes"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("ProbMatrix contém NaN ou Inf")
        if np.any(values < -1e-12):
            raise StochasticityError("ProbMatrix com probabilidade negativa")
        values = np.clip(values, 0.0, None)
        if len(self.ids):
            sums = values.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if bad.size:
                rid = self.ids[int(bad[0])]
                raise StochasticityError(
                    f"linha '{rid}' soma {sums[bad[0]]:.9f} (tolerância {ROW_SUM_TOL})"
                )
        _check_unique(self.ids, "id")
        _check_unique(self.classes, "classe", SchemaError)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    def argmax_indices(self) -> np.ndarray:
        # np.argmax devolve o primeiro máximo: empate fica com o menor índice
        return np.argmax(self.values, axis=1)

    def argmax_labels(self) -> List[str]:
        return [self.classes[i] for i in self.argmax_indices()]

    def reorder_classes(self, classes: Sequence[str]) -> "ProbMatrix":
        classes = tuple(classes)
        if set(classes) != set(self.classes) or len(classes) != len(self.classes):
            raise AlignmentError(
                f"classes incompatíveis: {sorted(self.classes)} vs {sorted(classes)}"
            )
        if classes == self.classes:
            return self
        position = {c: j for j, c in enumerate(self.classes)}
        cols = [position[c] for c in classes]
        return ProbMatrix(self.ids, classes, self.values[:, cols])

    def select(self, ids: Sequence[str]) -> "ProbMatrix":
        index = {rid: i for i, rid in enumerate(self.ids)}
        missing = [rid for rid in ids if rid not in index]
        if missing:
            raise AlignmentError(f"ids ausentes na ProbMatrix: {missing[:5]}")
        return ProbMatrix(tuple(ids), self.classes, self.values[[index[r] for r in ids]])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.Index(self.ids, name="id"), columns=list(self.classes))

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, float_format="%.12g", encoding="utf-8", lineterminator="\n")
        return path


def question_indicators(records: Iterable) -> List[str]:
    indicators = set()
    for rec in records:
        indicators.update(rec.questions.keys())
    return sorted(indicators)


def encode_questions(records: Sequence, indicators: Optional[Sequence[str]] = None) -> FeatureMatrix:
    """Codifica as respostas estruturadas como matriz numérica.

    Para cada indicador gera a coluna de valor e a coluna ``<indicador>:missing``.
    Indicadores ausentes no registro contam como Missing.
    """
    indicators = list(indicators) if indicators is not None else question_indicators(records)
    columns: List[str] = []
    for ind in indicators:
        columns.extend([ind, f"{ind}{MISSING_SUFFIX}"])

    values = np.zeros((len(records), len(columns)))
    for i, rec in enumerate(records):
        for j, ind in enumerate(indicators):
            response = rec.questions.get(ind)
            key = response.value if response is not None else "Missing"
            values[i, 2 * j] = RESPONSE_VALUES[key]
            values[i, 2 * j + 1] = 1.0 if key == "Missing" else 0.0

    logger.debug(f"[FEATURES] {len(records)} registros codificados em {len(columns)} colunas")
    return FeatureMatrix(tuple(r.id for r in records), tuple(columns), values)
