"""
Adaptador para probabilidades produzidas fora do pipeline (modelos de
linguagem ajustados, InSilicoVA etc.).

Formato: CSV com cabeçalho ``id,<classe...>``; as colunas de classe podem vir
em qualquer ordem e são realinhadas pelo nome.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.dataset import read_utf8_csv
from core.errors import DuplicateIdError, NonFiniteError, SchemaError, StochasticityError
from core.features import ProbMatrix

logger = logging.getLogger(__name__)

RENORMALIZE_TOL = 1e-3


def load_external_predictions(path: Union[str, Path], class_list: Sequence[str]) -> ProbMatrix:
    path = Path(path).resolve()
    return _load(str(path), tuple(class_list), path.stat().st_mtime_ns)


@lru_cache(maxsize=32)
def _load(path: str, class_list: Tuple[str, ...], mtime_ns: int) -> ProbMatrix:
    frame = read_utf8_csv(path, dtype={"id": str}, keep_default_na=False)

    if not len(frame.columns) or frame.columns[0] != "id":
        raise SchemaError(f"{Path(path).name}: a primeira coluna deve ser 'id'")
    file_classes = [str(c) for c in frame.columns[1:]]
    if sorted(file_classes) != sorted(class_list) or len(set(file_classes)) != len(file_classes):
        extra = sorted(set(file_classes) - set(class_list))
        missing = sorted(set(class_list) - set(file_classes))
        raise SchemaError(f"{Path(path).name}: classes incompatíveis (sobrando {extra}, faltando {missing})")

    ids = [str(i).strip() for i in frame["id"]]
    duplicated = frame["id"][frame["id"].duplicated()].tolist()
    if duplicated:
        raise DuplicateIdError(f"{Path(path).name}: ids duplicados {duplicated[:5]}")

    try:
        values = frame[list(class_list)].apply(pd.to_numeric, errors="raise").to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise SchemaError(f"{Path(path).name}: valor não numérico: {e}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{Path(path).name}: probabilidades com NaN ou Inf")
    if np.any(values < 0):
        raise StochasticityError(f"{Path(path).name}: probabilidade negativa")

    sums = values.sum(axis=1)
    off = np.abs(sums - 1.0)
    bad = np.flatnonzero(off > RENORMALIZE_TOL)
    if bad.size:
        raise StochasticityError(
            f"{Path(path).name}: linha '{ids[bad[0]]}' soma {sums[bad[0]]:.6f} (tolerância {RENORMALIZE_TOL})"
        )
    drifted = int(np.count_nonzero(off > 0))
    if drifted:
        logger.warning(f"[LEARNER] {drifted} linhas renormalizadas em {Path(path).name}")
        values = values / sums[:, None]

    logger.info(f"[LEARNER] {len(ids)} predições externas carregadas de {Path(path).name}")
    return ProbMatrix(tuple(ids), tuple(class_list), values)
