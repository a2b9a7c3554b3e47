# Busca de hiperparâmetros: espaços, amostrador TPE e estudos com poda
from .sampler import TpeSampler
from .search_space import ParamKind, ParamSpec, load_search_space
from .study import (
    Direction,
    FoldReporter,
    HistoryPruner,
    PrunerConfig,
    StudyConfig,
    TrialPruned,
    TrialRecord,
    TrialState,
    cv_objective,
    run_study,
    should_prune,
    write_study_log,
)

__all__ = [
    "Direction",
    "FoldReporter",
    "HistoryPruner",
    "ParamKind",
    "ParamSpec",
    "PrunerConfig",
    "StudyConfig",
    "TpeSampler",
    "TrialPruned",
    "TrialRecord",
    "TrialState",
    "cv_objective",
    "load_search_space",
    "run_study",
    "should_prune",
    "write_study_log",
]
