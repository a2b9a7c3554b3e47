"""
Análise da suficiência de informação das autópsias verbais.

Agrupa os escores 1..5 em Low/Medium/High, prevê o nível a partir de cada
modalidade (narrativa, questionário e fusão de atributos) e mede a
contribuição marginal média de cada modalidade para o modelo multimodal.
"""
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from core.dataset import CauseTaxonomy, Dataset, LabelLevel
from core.errors import ConfigError, DegenerateDataError, DegenerateGainError, RangeError
from core.features import FeatureMatrix, encode_questions, question_indicators
from core.splits import stratified_split
from core.text_features import PreprocessConfig, TextFeaturizer
from evaluation.metrics import accuracy, csmf_accuracy, true_csmf
from fusion.ensemble import fuse_features
from learners.base import FittedModel, LearnerKind, LearnerSpec, fit, predict_proba
from sufficiency.shapley import importance_frame

logger = logging.getLogger(__name__)

DEFAULT_SVD_K = 450


class SufficiencyLevel(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


SUFFICIENCY_CLASSES = tuple(level.value for level in SufficiencyLevel)
SUFFICIENCY_MODALITIES = ("narrative", "questions", "feature_fusion")


def group_sufficiency(score: int) -> SufficiencyLevel:
    if isinstance(score, bool) or not isinstance(score, (int, np.integer)) or not 1 <= score <= 5:
        raise RangeError(f"escore de suficiência fora de 1..5: {score!r}")
    if score <= 2:
        return SufficiencyLevel.LOW
    if score == 3:
        return SufficiencyLevel.MEDIUM
    return SufficiencyLevel.HIGH


@dataclass(frozen=True)
class ContributionReport:
    acc_narrative: float
    acc_question: float
    acc_multimodal: float
    total_gain: float
    contrib_narrative_pct: float
    contrib_question_pct: float

    def to_dict(self) -> dict:
        return asdict(self)


def marginal_contribution(acc_n: float, acc_q: float, acc_both: float) -> ContributionReport:
    """Contribuição marginal média de cada modalidade para o ganho do modelo multimodal.

    ganho total = acc_both - (acc_n + acc_q) / 2
    contribuição da narrativa = (acc_both - acc_q) / 2 / ganho total
    """
    for name, value in (("acc_n", acc_n), ("acc_q", acc_q), ("acc_both", acc_both)):
        if not 0.0 <= value <= 1.0:
            raise RangeError(f"{name} fora de [0, 1]: {value}")
    total_gain = acc_both - 0.5 * (acc_n + acc_q)
    if abs(total_gain) < 1e-12:
        raise DegenerateGainError(
            f"ganho total nulo (n={acc_n}, q={acc_q}, ambos={acc_both}): contribuições indefinidas"
        )
    contrib_q = 0.5 * (acc_both - acc_n) / total_gain * 100.0
    return ContributionReport(acc_n, acc_q, acc_both, total_gain, 100.0 - contrib_q, contrib_q)


def sufficiency_dataset(ds: Dataset) -> Dataset:
    """Reetiqueta os registros pelo nível de suficiência; registros sem escore ficam de fora."""
    records = []
    for rec in ds.records:
        if rec.sufficiency_score is None:
            continue
        level = group_sufficiency(rec.sufficiency_score)
        records.append(rec.model_copy(update={
            "cause_icd10": None, "cause_level1": None, "cause_level2": None, "cause_level3": level.value,
        }))
    dropped = len(ds) - len(records)
    if dropped:
        logger.warning(f"[SUFFICIENCY] {dropped} registros sem escore de suficiência ignorados")
    if not records:
        raise DegenerateDataError("nenhum registro com escore de suficiência")
    return Dataset(tuple(records), CauseTaxonomy(level3=SUFFICIENCY_CLASSES), LabelLevel.L3)


@dataclass
class SufficiencyResult:
    accuracies: Dict[str, float]
    contribution: Optional[ContributionReport]
    n_train: int
    n_test: int
    svd_k: int
    class_counts: Dict[str, int] = field(default_factory=dict)
    models: Dict[str, FittedModel] = field(default_factory=dict, repr=False)
    test_features: Dict[str, FeatureMatrix] = field(default_factory=dict, repr=False)
    train_features: Dict[str, FeatureMatrix] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "accuracies": dict(self.accuracies),
            "contribution": self.contribution.to_dict() if self.contribution else None,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "svd_k": self.svd_k,
            "class_counts": dict(self.class_counts),
        }


def predict_sufficiency_pipeline(ds: Dataset, text_cfg: Optional[PreprocessConfig] = None,
                                 svd_k: int = DEFAULT_SVD_K, learner: Optional[LearnerSpec] = None,
                                 test_fraction: float = 0.2, seed: int = 42,
                                 ngram_range=(1, 2), min_df: int = 2, max_features: Optional[int] = None,
                                 learners: Optional[Mapping[str, LearnerSpec]] = None) -> SufficiencyResult:
    """Classifica o nível de suficiência com narrativa, questionário e fusão dos dois.

    Narrativa: TF-IDF seguido de SVD com ``svd_k`` componentes, ajustados só no
    treino. Questionário: indicadores codificados. Fusão: concatenação dos dois
    blocos. Split estratificado ``1 - test_fraction``/``test_fraction``; a
    métrica é a acurácia. ``learners`` escolhe o classificador por modalidade
    (``narrative``, ``questions``, ``feature_fusion``); as ausentes usam ``learner``.
    """
    unknown = sorted(set(learners or {}) - set(SUFFICIENCY_MODALITIES))
    if unknown:
        raise ConfigError(f"modalidades de suficiência desconhecidas: {unknown}")
    sds = sufficiency_dataset(ds)
    plan = stratified_split(sds, test_fraction, seed, allow_empty_classes=True)
    train, test = sds.subset(plan.train_ids), sds.subset(plan.test_ids)
    learner = learner or LearnerSpec(kind=LearnerKind.LOGREG, seed=seed)

    featurizer = TextFeaturizer(text_cfg, ngram_range=ngram_range, min_df=min_df, max_features=max_features,
                                k=svd_k, seed=seed)
    text_train = featurizer.fit_transform(train.ids, [r.narrative for r in train.records])
    text_test = featurizer.transform(test.ids, [r.narrative for r in test.records])
    indicators = question_indicators(train.records)
    tab_train = encode_questions(train.records, indicators)
    tab_test = encode_questions(test.records, indicators)

    train_features = {
        "narrative": text_train,
        "questions": tab_train,
        "feature_fusion": fuse_features(text_train, tab_train),
    }
    test_features = {
        "narrative": text_test,
        "questions": tab_test,
        "feature_fusion": fuse_features(text_test, tab_test),
    }

    y_train, y_test = train.labels(train.ids), test.labels(test.ids)
    accuracies, models = {}, {}
    for name, X_train in train_features.items():
        spec = (learners or {}).get(name, learner).model_copy(update={"name": f"sufficiency:{name}"})
        model = fit(spec, X_train, y_train, classes=SUFFICIENCY_CLASSES)
        pred = predict_proba(model, test_features[name]).argmax_labels()
        accuracies[name] = accuracy(y_test, pred)
        models[name] = model
        logger.info(f"[SUFFICIENCY] {name}: acurácia={accuracies[name]:.3f} (n_test={len(y_test)})")

    try:
        contribution = marginal_contribution(
            accuracies["narrative"], accuracies["questions"], accuracies["feature_fusion"]
        )
        logger.info(
            f"[SUFFICIENCY] Contribuição: narrativa={contribution.contrib_narrative_pct:.1f}% "
            f"questionário={contribution.contrib_question_pct:.1f}%"
        )
    except DegenerateGainError as e:
        logger.warning(f"[SUFFICIENCY] {e}")
        contribution = None

    counts = pd.Series(sds.labels(sds.ids)).value_counts()
    return SufficiencyResult(
        accuracies=accuracies,
        contribution=contribution,
        n_train=len(train),
        n_test=len(test),
        svd_k=featurizer.svd.k,
        class_counts={c: int(counts.get(c, 0)) for c in SUFFICIENCY_CLASSES},
        models=models,
        test_features=test_features,
        train_features=train_features,
    )


def performance_by_sufficiency(true_labels: Sequence[str], pred_labels: Sequence[str],
                               scores: Sequence[Optional[int]], classes: Sequence[str]) -> pd.DataFrame:
    """Acurácia e acurácia de CSMF da classificação de causas, estratificadas por nível de suficiência."""
    if not len(true_labels) == len(pred_labels) == len(scores):
        raise DegenerateDataError("rótulos, predições e escores com tamanhos diferentes")
    rows = []
    levels = [group_sufficiency(s) if s is not None else None for s in scores]
    for level in SufficiencyLevel:
        idx = [i for i, lv in enumerate(levels) if lv is level]
        if not idx:
            rows.append({"level": level.value, "n": 0, "accuracy": np.nan, "csmf_accuracy": np.nan})
            continue
        t = [true_labels[i] for i in idx]
        p = [pred_labels[i] for i in idx]
        rows.append({
            "level": level.value,
            "n": len(idx),
            "accuracy": accuracy(t, p),
            "csmf_accuracy": csmf_accuracy(true_csmf(t, classes), true_csmf(p, classes)),
        })
    return pd.DataFrame(rows)


def permutation_importance(model: FittedModel, X: FeatureMatrix, y: Sequence[str], n_repeats: int = 10,
                           seed: int = 0,
                           scoring: Callable[[Sequence[str], Sequence[str]], float] = accuracy) -> pd.DataFrame:
    """Queda média de desempenho ao embaralhar cada atributo."""
    rng = np.random.default_rng(seed)
    y = list(y)
    base = scoring(y, predict_proba(model, X).argmax_labels())
    drops = np.zeros((n_repeats, X.n_cols))
    for r in range(n_repeats):
        for j in range(X.n_cols):
            values = X.values.copy()
            values[:, j] = values[rng.permutation(X.n_rows), j]
            permuted = FeatureMatrix(X.ids, X.columns, values)
            drops[r, j] = base - scoring(y, predict_proba(model, permuted).argmax_labels())
    frame = importance_frame(X.columns, drops.mean(axis=0), column="mean_drop")
    frame["std_drop"] = [float(drops[:, X.columns.index(f)].std()) for f in frame["feature"]]
    logger.info(f"[SUFFICIENCY] Importância por permutação: {X.n_cols} atributos, {n_repeats} repetições")
    return frame
