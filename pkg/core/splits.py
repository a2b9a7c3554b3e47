"""
Divisões estratificadas por causa de óbito: treino/teste, k-fold e
subamostragem do treino (análise de sensibilidade ao tamanho do treino).

Esquema: embaralha dentro de cada classe com RNG semeado e fatia de forma
contígua. Todas as funções são puras em (dataset, seed).
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, NamedTuple, Tuple, Union

import numpy as np

from core.dataset import Dataset
from core.errors import EmptyClassError, FoldError, VaForgeError

logger = logging.getLogger(__name__)

Rational = Union[float, Fraction, str]


@dataclass(frozen=True)
class SplitPlan:
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    seed: int
    test_fraction: float
    unlabeled_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        if set(self.train_ids) & set(self.test_ids):
            raise VaForgeError("SplitPlan com ids em treino e teste ao mesmo tempo")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "unlabeled_ids": list(self.unlabeled_ids),
        }


class Fold(NamedTuple):
    train_ids: Tuple[str, ...]
    val_ids: Tuple[str, ...]


def _as_fraction(value: Rational, name: str, allow_one: bool) -> Fraction:
    frac = Fraction(str(value)).limit_denominator(10**6) if not isinstance(value, Fraction) else value
    upper_ok = frac <= 1 if allow_one else frac < 1
    if not (frac > 0 and upper_ok):
        raise VaForgeError(f"{name} fora do intervalo: {value}")
    return frac


def _round_half_up(value: Fraction) -> int:
    return int((value + Fraction(1, 2)) // 1)


def group_by_class(ds: Dataset, allow_empty_classes: bool = False) -> Dict[str, List[str]]:
    """ids rotulados agrupados por classe, na ordem da taxonomia."""
    groups: Dict[str, List[str]] = {c: [] for c in ds.classes}
    for rec in ds.records:
        label = rec.label(ds.label_level)
        if label is not None:
            groups[label].append(rec.id)
    if not any(groups.values()):
        raise EmptyClassError("nenhum registro rotulado para dividir")
    empty = [c for c, ids in groups.items() if not ids]
    if empty and not allow_empty_classes:
        raise EmptyClassError(f"classes sem registros em {ds.label_level.value}: {empty}")
    return {c: ids for c, ids in groups.items() if ids}


def stratified_split(ds: Dataset, test_fraction: Rational = 0.2, seed: int = 42,
                     allow_empty_classes: bool = False) -> SplitPlan:
    fraction = _as_fraction(test_fraction, "test_fraction", allow_one=False)
    rng = np.random.default_rng(seed)
    train: List[str] = []
    test: List[str] = []

    for label, ids in group_by_class(ds, allow_empty_classes).items():
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        n_test = _round_half_up(len(ids) * fraction)
        if len(ids) >= 2:
            n_test = min(n_test, len(ids) - 1)
        test.extend(shuffled[:n_test])
        train.extend(shuffled[n_test:])
        logger.debug(f"[SPLIT] {label}: {len(ids) - n_test} treino / {n_test} teste")

    order = {rid: i for i, rid in enumerate(ds.ids)}
    train.sort(key=order.__getitem__)
    test.sort(key=order.__getitem__)
    labeled = set(train) | set(test)
    unlabeled = tuple(rid for rid in ds.ids if rid not in labeled)
    if unlabeled:
        logger.info(f"[SPLIT] {len(unlabeled)} registros sem rótulo ficam fora da divisão")

    logger.info(f"[SPLIT] Divisão estratificada: {len(train)} treino / {len(test)} teste (seed={seed})")
    return SplitPlan(tuple(train), tuple(test), seed, float(fraction), unlabeled)


def stratified_kfold(ds: Dataset, k: int = 5, seed: int = 42) -> List[Fold]:
    if k < 2:
        raise FoldError(f"k precisa ser >= 2, recebeu {k}")
    groups = group_by_class(ds, allow_empty_classes=True)
    small = {c: len(ids) for c, ids in groups.items() if len(ids) < k}
    if small:
        raise FoldError(f"classes com menos de {k} registros: {small}")

    rng = np.random.default_rng(seed)
    fold_of: Dict[str, int] = {}
    offset = 0
    for ids in groups.values():
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        # sobras de cada classe começam no fold seguinte ao da classe anterior
        sizes = np.roll([len(chunk) for chunk in np.array_split(np.arange(len(ids)), k)], offset)
        start = 0
        for fold, size in enumerate(sizes):
            for rid in shuffled[start:start + size]:
                fold_of[rid] = fold
            start += size
        offset = (offset + len(ids) % k) % k

    folds = []
    ordered = [rid for rid in ds.ids if rid in fold_of]
    for fold in range(k):
        val = tuple(rid for rid in ordered if fold_of[rid] == fold)
        train = tuple(rid for rid in ordered if fold_of[rid] != fold)
        folds.append(Fold(train, val))
    logger.info(f"[SPLIT] {k} folds estratificados: tamanhos {[len(f.val_ids) for f in folds]}")
    return folds


def subsample_training(ds: Dataset, fraction: Rational, seed: int = 42,
                       allow_empty_classes: bool = False) -> Dataset:
    """Subamostra estratificada do treino; cada classe presente mantém ao menos um registro.

    Classe da taxonomia sem registros levanta EmptyClassError, a menos que
    ``allow_empty_classes`` seja verdadeiro. Não há garantia de aninhamento: a
    amostra de 0.2 não é necessariamente subconjunto da amostra de 0.4 com a
    mesma seed.
    """
    frac = _as_fraction(fraction, "fraction", allow_one=True)
    groups = group_by_class(ds, allow_empty_classes)
    if frac == 1:
        return ds

    rng = np.random.default_rng(seed)
    keep = set()
    for ids in groups.values():
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        n_keep = max(1, _round_half_up(len(ids) * frac))
        keep.update(shuffled[:n_keep])

    logger.info(f"[SPLIT] Subamostra de {float(frac):.0%}: {len(keep)} registros (seed={seed})")
    return ds.subset(keep)
