"""
Busca de hiperparâmetros sobre o optuna, com poda pela mediana.

Política de execução: amostragem sequencial, avaliação paralela. O trial t
é amostrado a partir dos trials 0..t-1 qualquer que seja o número de
workers; o paralelismo fica dentro do objetivo, nos folds da validação
cruzada. O log de trials é uma projeção de ``study.trials``.
"""
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import jsonlines
import numpy as np
import optuna
from joblib import Parallel, delayed
from optuna import TrialPruned
from optuna.pruners import BasePruner
from optuna.trial import FrozenTrial
from pydantic import BaseModel, ConfigDict, Field

from core.dataset import Dataset
from core.errors import AllTrialsPrunedError, VaForgeError
from core.features import FeatureMatrix
from core.splits import Fold, stratified_kfold
from evaluation.metrics import aggregate, confusion, per_class_prf
from hpo.sampler import GAMMA, N_CANDIDATES, N_STARTUP, TpeSampler
from hpo.search_space import ParamSpec
from learners.base import LearnerSpec, fit, predict_proba

logger = logging.getLogger(__name__)


class TrialState(str, Enum):
    RUNNING = "running"
    COMPLETE = "complete"
    PRUNED = "pruned"
    FAILED = "failed"


_FROM_OPTUNA = {
    optuna.trial.TrialState.RUNNING: TrialState.RUNNING,
    optuna.trial.TrialState.WAITING: TrialState.RUNNING,
    optuna.trial.TrialState.COMPLETE: TrialState.COMPLETE,
    optuna.trial.TrialState.PRUNED: TrialState.PRUNED,
    optuna.trial.TrialState.FAIL: TrialState.FAILED,
}


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


@dataclass
class TrialRecord:
    trial_id: int
    config: Dict[str, Any]
    interim_scores: List[float] = field(default_factory=list)
    final_score: Optional[float] = None
    state: TrialState = TrialState.RUNNING
    error: Optional[str] = None

    def __post_init__(self):
        self.state = TrialState(self.state)
        if self.state is TrialState.COMPLETE and self.final_score is None:
            raise VaForgeError(f"trial {self.trial_id} completo sem score final")
        if self.state is not TrialState.COMPLETE and self.final_score is not None:
            raise VaForgeError(f"trial {self.trial_id} ({self.state.value}) não pode ter score final")

    @classmethod
    def from_frozen(cls, trial: FrozenTrial, space: Sequence[ParamSpec]) -> "TrialRecord":
        """Projeta um trial do optuna: categóricos voltam do índice para o valor."""
        config = {spec.name: spec.from_optuna(trial.params[spec.name]) for spec in space if spec.name in trial.params}
        interim = [float(trial.intermediate_values[s]) for s in sorted(trial.intermediate_values)]
        state = _FROM_OPTUNA.get(trial.state, TrialState.FAILED)
        final = float(trial.value) if state is TrialState.COMPLETE else None
        return cls(trial.number, config, interim, final, state, trial.user_attrs.get("error"))

    @property
    def step(self) -> int:
        return len(self.interim_scores)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["state"] = self.state.value
        return data


class PrunerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    warmup_steps: int = Field(default=1, ge=0)
    startup_trials: int = Field(default=5, ge=0)


class StudyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_trials: int = Field(default=30, ge=1)
    direction: Direction = Direction.MAXIMIZE
    pruner: PrunerConfig = Field(default_factory=PrunerConfig)
    seed: int = 42
    n_startup: int = Field(default=N_STARTUP, ge=0)
    gamma: float = Field(default=GAMMA, gt=0, lt=1)
    n_candidates: int = Field(default=N_CANDIDATES, ge=1)

    @property
    def maximize(self) -> bool:
        return self.direction is Direction.MAXIMIZE


def should_prune(trial: TrialRecord, history: Sequence[TrialRecord], pruner: PrunerConfig,
                 direction: Direction = Direction.MAXIMIZE) -> bool:
    """Regra da mediana no passo atual do trial.

    A contagem de ``startup_trials`` usa só trials completos; a mediana usa os
    scores intermediários de completos e podados que chegaram a esse passo.
    """
    step = trial.step
    if step < 1 or step <= pruner.warmup_steps:
        return False
    others = [t for t in history if t.trial_id != trial.trial_id]
    if sum(1 for t in others if t.state is TrialState.COMPLETE) < pruner.startup_trials:
        return False
    peers = [t.interim_scores[step - 1] for t in others
             if t.state in (TrialState.COMPLETE, TrialState.PRUNED) and t.step >= step]
    if not peers:
        return False
    median = float(np.median(peers))
    score = trial.interim_scores[step - 1]
    if Direction(direction) is Direction.MAXIMIZE:
        return score < median
    return score > median


PruneFn = Callable[[TrialRecord, Sequence[TrialRecord], PrunerConfig, Direction], bool]


class HistoryPruner(BasePruner):
    """Pruner do optuna que aplica ``rule`` sobre a projeção dos trials do estudo."""

    def __init__(self, config: PrunerConfig, space: Sequence[ParamSpec], rule: PruneFn = should_prune):
        self.config = config
        self.space = list(space)
        self.rule = rule

    def prune(self, study: optuna.Study, trial: FrozenTrial) -> bool:
        record = TrialRecord.from_frozen(trial, self.space)
        history = [TrialRecord.from_frozen(t, self.space)
                   for t in study.get_trials(deepcopy=False) if t.number != trial.number]
        direction = Direction(study.direction.name.lower())
        return bool(self.rule(record, history, self.config, direction))


class FoldReporter:
    """Repassa os scores intermediários ao trial do optuna e interrompe quando podado."""

    def __init__(self, trial: optuna.Trial):
        self.trial = trial
        self.step = 0

    def report(self, score: float):
        self.step += 1
        self.trial.report(float(score), self.step)
        if self.trial.should_prune():
            logger.debug(f"[HPO] Trial {self.trial.number} podado no passo {self.step}")
            raise TrialPruned(f"podado no passo {self.step}")


Objective = Callable[[Dict[str, Any], FoldReporter], float]


def _as_optuna_objective(objective: Objective, space: Sequence[ParamSpec]) -> Callable[[optuna.Trial], float]:
    def run(trial: optuna.Trial) -> float:
        config = {spec.name: spec.suggest(trial) for spec in space}
        try:
            score = float(objective(config, FoldReporter(trial)))
        except TrialPruned:
            raise
        except Exception as e:
            logger.warning(f"[HPO] Trial {trial.number} falhou: {e}")
            trial.set_user_attr("error", str(e))
            return float("nan")
        if not np.isfinite(score):
            trial.set_user_attr("error", f"score não finito: {score}")
            return float("nan")
        return score

    return run


def best_trial(trials: Sequence[TrialRecord], direction: Direction = Direction.MAXIMIZE) -> TrialRecord:
    completed = [t for t in trials if t.state is TrialState.COMPLETE]
    if not completed:
        states = {s.value: sum(1 for t in trials if t.state is s) for s in TrialState}
        raise AllTrialsPrunedError(f"nenhum trial completo: {states}")
    sign = -1.0 if Direction(direction) is Direction.MAXIMIZE else 1.0
    return min(completed, key=lambda t: (sign * t.final_score, t.trial_id))


def run_study(objective: Objective, space: Sequence[ParamSpec], study: StudyConfig,
              prune_fn: PruneFn = should_prune,
              sampler: Optional[optuna.samplers.BaseSampler] = None) -> Tuple[Dict[str, Any], List[TrialRecord]]:
    """Executa ``study.n_trials`` trials e devolve (melhor configuração, log completo)."""
    sampler = sampler or TpeSampler(space, study.seed, study.gamma, study.n_candidates, study.n_startup)
    logger.info(f"[HPO] Estudo com {study.n_trials} trials ({study.direction.value}, seed={study.seed})")

    optuna_study = optuna.create_study(
        direction=study.direction.value,
        sampler=sampler,
        pruner=HistoryPruner(study.pruner, space, prune_fn),
    )
    optuna_study.optimize(_as_optuna_objective(objective, space), n_trials=study.n_trials, n_jobs=1)
    trials = [TrialRecord.from_frozen(t, space) for t in optuna_study.get_trials(deepcopy=False)]

    best = best_trial(trials, study.direction)
    counts = {s.value: sum(1 for t in trials if t.state is s) for s in TrialState}
    logger.info(f"[HPO] Melhor trial {best.trial_id}: score={best.final_score:.4f} | estados={counts}")
    return dict(best.config), trials


def write_study_log(trials: Sequence[TrialRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with jsonlines.open(path, mode="w") as writer:
        for trial in trials:
            writer.write(trial.to_dict())
    logger.info(f"[HPO] Log de {len(trials)} trials salvo em {path}")
    return path


def read_study_log(path: Union[str, Path]) -> List[TrialRecord]:
    with jsonlines.open(path) as reader:
        return [TrialRecord(**row) for row in reader]


def weighted_f1(true_labels: Sequence[str], pred_labels: Sequence[str], classes: Sequence[str]) -> float:
    return aggregate(per_class_prf(confusion(true_labels, pred_labels, classes)), "weighted")["f1"]


def _fold_score(spec: LearnerSpec, i: int, fold: Fold, X: FeatureMatrix, ds: Dataset) -> float:
    fold_spec = spec.model_copy(update={"seed": spec.seed + i})
    model = fit(fold_spec, X.select(fold.train_ids), ds.labels(fold.train_ids), classes=ds.classes)
    pred = predict_proba(model, X.select(fold.val_ids)).argmax_labels()
    return weighted_f1(ds.labels(fold.val_ids), pred, ds.classes)


def cv_objective(spec_template: LearnerSpec, ds: Dataset, features: FeatureMatrix,
                 k: int = 5, seed: int = 42, n_jobs: int = 1) -> Objective:
    """Objetivo de validação cruzada estratificada: média do F1 ponderado nos folds.

    Os folds são avaliados em blocos de ``n_jobs`` e reportados na ordem, um
    score intermediário por fold, então a poda e o resultado não dependem do
    número de workers. A configuração sorteada é sobreposta aos
    hiperparâmetros do template.
    """
    folds = list(enumerate(stratified_kfold(ds, k, seed)))
    X = features.select(ds.ids)
    n_jobs = max(1, int(n_jobs))

    def objective(config: Dict[str, Any], reporter: Optional[FoldReporter] = None) -> float:
        spec = LearnerSpec.model_validate({
            **spec_template.model_dump(mode="json"),
            "hyperparams": {**spec_template.hyperparams, **config},
        })
        scores = []
        for start in range(0, len(folds), n_jobs):
            block = folds[start:start + n_jobs]
            block_scores = Parallel(n_jobs=len(block))(
                delayed(_fold_score)(spec, i, fold, X, ds) for i, fold in block
            )
            for score in block_scores:
                scores.append(score)
                if reporter is not None:
                    reporter.report(score)
        return float(np.mean(scores))

    return objective
