"""
Métricas individuais (acurácia, precisão/recall/F1 por classe e agregadas)
e populacionais (CSMF, CSMF accuracy e a versão corrigida pelo acaso).

Convenção: qualquer divisão 0/0 em precisão, recall ou F1 vale 0.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from core.errors import DegenerateError, LabelError, StochasticityError, VaForgeError
from core.features import ProbMatrix

logger = logging.getLogger(__name__)

CHANCE_CSMF = 0.632
SIMPLEX_TOL = 1e-6


class AggregateMode(str, Enum):
    WEIGHTED = "weighted"
    MACRO = "macro"
    MICRO = "micro"


class CsmfMode(str, Enum):
    MEAN_PROB = "mean_prob"
    TOP_CAUSE = "top_cause"


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    classes: Tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.counts, index=pd.Index(self.classes, name="true"), columns=list(self.classes))

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, encoding="utf-8", lineterminator="\n")
        return path


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True, eq=False)
class CsmfVector:
    classes: Tuple[str, ...]
    fractions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        fractions = np.asarray(self.fractions, dtype=np.float64)
        if fractions.shape != (len(self.classes),):
            raise VaForgeError(f"CSMF com {fractions.shape} valores para {len(self.classes)} classes")
        if np.any(fractions < 0) or abs(fractions.sum() - 1.0) > SIMPLEX_TOL:
            raise StochasticityError(f"CSMF fora do simplex (soma {fractions.sum():.9f})")
        object.__setattr__(self, "fractions", fractions)

    def reorder(self, classes: Sequence[str]) -> "CsmfVector":
        classes = tuple(classes)
        if sorted(classes) != sorted(self.classes):
            raise LabelError(f"classes de CSMF incompatíveis: {self.classes} vs {classes}")
        position = {c: i for i, c in enumerate(self.classes)}
        return CsmfVector(classes, self.fractions[[position[c] for c in classes]])

    def as_dict(self) -> Dict[str, float]:
        return {c: float(f) for c, f in zip(self.classes, self.fractions)}


def _check_labels(labels: Sequence[str], classes: Sequence[str], what: str):
    unknown = sorted(set(labels) - set(classes))
    if unknown:
        raise LabelError(f"rótulos {what} fora das classes: {unknown[:5]}")


def confusion(true_labels: Sequence[str], pred_labels: Sequence[str], classes: Sequence[str]) -> ConfusionMatrix:
    """Linhas = classe verdadeira, colunas = classe predita."""
    classes = tuple(classes)
    true_labels, pred_labels = list(true_labels), list(pred_labels)
    if len(true_labels) != len(pred_labels):
        raise LabelError(f"{len(true_labels)} rótulos verdadeiros e {len(pred_labels)} preditos")
    _check_labels(true_labels, classes, "verdadeiros")
    _check_labels(pred_labels, classes, "preditos")
    if not true_labels:
        return ConfusionMatrix(classes, np.zeros((len(classes), len(classes)), dtype=np.int64))
    counts = confusion_matrix(true_labels, pred_labels, labels=list(classes))
    return ConfusionMatrix(classes, counts.astype(np.int64))


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def per_class_prf(cm: ConfusionMatrix) -> List[ClassMetrics]:
    tp = np.diag(cm.counts)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return [
        ClassMetrics(c, float(precision[i]), float(recall[i]), float(f1[i]), int(tp[i] + fn[i]),
                     int(tp[i]), int(fp[i]), int(fn[i]))
        for i, c in enumerate(cm.classes)
    ]


def aggregate(per_class: Sequence[ClassMetrics], mode: Union[str, AggregateMode] = AggregateMode.WEIGHTED) -> Dict[str, float]:
    """Agrega precisão, recall e F1: weighted (pelo suporte), macro (média simples) ou micro (contagens somadas)."""
    if not per_class:
        raise VaForgeError("agregação sem classes")
    mode = AggregateMode(mode)
    P = np.array([m.precision for m in per_class])
    R = np.array([m.recall for m in per_class])
    F = np.array([m.f1 for m in per_class])
    support = np.array([m.support for m in per_class], dtype=np.float64)
    tp = sum(m.tp for m in per_class)

    if mode is AggregateMode.MACRO:
        return {"precision": float(P.mean()), "recall": float(R.mean()), "f1": float(F.mean())}

    if mode is AggregateMode.WEIGHTED:
        n = support.sum()
        if n == 0:
            return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
        # sum(n_i/N * TP_i/n_i) = sum(TP_i)/N
        return {"precision": float(support @ P / n), "recall": tp / n, "f1": float(support @ F / n)}

    fp = sum(m.fp for m in per_class)
    fn = sum(m.fn for m in per_class)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision == recall:
        f1 = precision
    else:
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def accuracy(true_labels: Sequence[str], pred_labels: Sequence[str]) -> float:
    if not len(true_labels):
        return 0.0
    return float(np.mean(np.asarray(true_labels, dtype=object) == np.asarray(pred_labels, dtype=object)))


def csmf(pred: ProbMatrix, mode: Union[str, CsmfMode] = CsmfMode.MEAN_PROB) -> CsmfVector:
    """Frações por causa: média das probabilidades (padrão) ou contagem normalizada do argmax."""
    if not pred.n_rows:
        raise DegenerateError("CSMF de uma matriz sem registros")
    if CsmfMode(mode) is CsmfMode.MEAN_PROB:
        fractions = pred.values.mean(axis=0)
        fractions = fractions / fractions.sum()
    else:
        fractions = np.bincount(pred.argmax_indices(), minlength=len(pred.classes)) / pred.n_rows
    return CsmfVector(pred.classes, fractions)


def true_csmf(true_labels: Sequence[str], classes: Sequence[str]) -> CsmfVector:
    _check_labels(true_labels, classes, "verdadeiros")
    if not len(true_labels):
        raise DegenerateError("CSMF verdadeira sem registros")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.bincount([index[label] for label in true_labels], minlength=len(classes))
    return CsmfVector(tuple(classes), counts / counts.sum())


def csmf_accuracy(true: CsmfVector, pred: CsmfVector) -> float:
    """1 - sum|true_i - pred_i| / (2 (1 - min true_i))."""
    pred = pred.reorder(true.classes)
    denominator = 2.0 * (1.0 - float(true.fractions.min()))
    if denominator <= 1e-12:
        raise DegenerateError("CSMF accuracy indefinida: min(true) = 1")
    return 1.0 - float(np.abs(true.fractions - pred.fractions).sum()) / denominator


def cccsmf_accuracy(csmf_acc: float, chance: float = CHANCE_CSMF) -> float:
    """CSMF accuracy corrigida pelo acaso; pode ser negativa."""
    return (csmf_acc - chance) / (1.0 - chance)


@dataclass
class MetricReport:
    n: int
    classes: List[str]
    accuracy: float
    weighted: Dict[str, float]
    macro: Dict[str, float]
    micro: Dict[str, float]
    csmf_accuracy: float
    cccsmf_accuracy: float
    csmf_accuracy_top_cause: float
    cccsmf_accuracy_top_cause: float
    per_class: List[ClassMetrics] = field(default_factory=list)
    csmf_true: Dict[str, float] = field(default_factory=dict)
    csmf_pred: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def summary(self) -> Dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted["precision"],
            "weighted_recall": self.weighted["recall"],
            "weighted_f1": self.weighted["f1"],
            "macro_precision": self.macro["precision"],
            "macro_recall": self.macro["recall"],
            "macro_f1": self.macro["f1"],
            "micro_precision": self.micro["precision"],
            "micro_recall": self.micro["recall"],
            "micro_f1": self.micro["f1"],
            "csmf_accuracy": self.csmf_accuracy,
            "cccsmf_accuracy": self.cccsmf_accuracy,
            "csmf_accuracy_top_cause": self.csmf_accuracy_top_cause,
            "cccsmf_accuracy_top_cause": self.cccsmf_accuracy_top_cause,
        }

    def to_dict(self) -> dict:
        data = asdict(self)
        data["summary"] = self.summary()
        return data


def evaluate_predictions(true_labels: Sequence[str], pred: ProbMatrix, chance: float = CHANCE_CSMF,
                         notes: Optional[Sequence[str]] = None) -> MetricReport:
    """Todas as métricas para probabilidades ``pred`` alinhadas a ``true_labels``."""
    true_labels = list(true_labels)
    if len(true_labels) != pred.n_rows:
        raise LabelError(f"{len(true_labels)} rótulos para {pred.n_rows} linhas de predição")
    pred_labels = pred.argmax_labels()
    cm = confusion(true_labels, pred_labels, pred.classes)
    per_class = per_class_prf(cm)

    truth = true_csmf(true_labels, pred.classes)
    by_mean = csmf(pred, CsmfMode.MEAN_PROB)
    by_top = csmf(pred, CsmfMode.TOP_CAUSE)
    acc_mean = csmf_accuracy(truth, by_mean)
    acc_top = csmf_accuracy(truth, by_top)

    report = MetricReport(
        n=len(true_labels),
        classes=list(pred.classes),
        accuracy=accuracy(true_labels, pred_labels),
        weighted=aggregate(per_class, AggregateMode.WEIGHTED),
        macro=aggregate(per_class, AggregateMode.MACRO),
        micro=aggregate(per_class, AggregateMode.MICRO),
        csmf_accuracy=acc_mean,
        cccsmf_accuracy=cccsmf_accuracy(acc_mean, chance),
        csmf_accuracy_top_cause=acc_top,
        cccsmf_accuracy_top_cause=cccsmf_accuracy(acc_top, chance),
        per_class=per_class,
        csmf_true=truth.as_dict(),
        csmf_pred=by_mean.as_dict(),
        notes=list(notes or []),
    )
    logger.info(
        f"[METRICS] n={report.n} acc={report.accuracy:.3f} wF1={report.weighted['f1']:.3f} "
        f"CSMF={acc_mean:.3f} CCCSMF={report.cccsmf_accuracy:.3f}"
    )
    return report


def bootstrap_metric(true_labels: Sequence[str], pred_labels: Sequence[str],
                     metric: Callable[[Sequence[str], Sequence[str]], float],
                     n: int = 1000, seed: int = 0, alpha: float = 0.05) -> Dict[str, float]:
    """Intervalo percentil por reamostragem dos registros. Utilitário descritivo."""
    true_arr = np.asarray(true_labels, dtype=object)
    pred_arr = np.asarray(pred_labels, dtype=object)
    if not len(true_arr):
        raise DegenerateError("bootstrap sem registros")
    rng = np.random.default_rng(seed)
    samples = np.empty(n)
    for b in range(n):
        idx = rng.integers(0, len(true_arr), size=len(true_arr))
        samples[b] = metric(list(true_arr[idx]), list(pred_arr[idx]))
    lower, upper = np.quantile(samples, [alpha / 2, 1 - alpha / 2])
    return {"point": float(metric(list(true_arr), list(pred_arr))), "lower": float(lower),
            "upper": float(upper), "n": n, "alpha": alpha}


def write_metric_report(report: MetricReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, ensure_ascii=False)
    logger.info(f"[METRICS] Relatório salvo em {path}")
    return path


def write_confusion_csv(cm: ConfusionMatrix, path: Union[str, Path]) -> Path:
    return cm.write_csv(path)


def write_csmf_table(true: CsmfVector, pred: CsmfVector, path: Union[str, Path]) -> Path:
    pred = pred.reorder(true.classes)
    frame = pd.DataFrame({"cause": list(true.classes), "true_csmf": true.fractions, "pred_csmf": pred.fractions})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f", encoding="utf-8", lineterminator="\n")
    return path
