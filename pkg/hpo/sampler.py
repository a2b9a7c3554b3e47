"""
Amostrador TPE (Tree-structured Parzen Estimator) para estudos do optuna.

Enquanto houver menos de ``n_startup`` trials completos, a amostragem é
uniforme no espaço interno de cada parâmetro. Depois disso o histórico é
dividido no quantil ``gamma``: os melhores formam a densidade l(x), o resto
forma g(x). São sorteados ``n_candidates`` candidatos de l(x) e fica o de
maior log l(x) - log g(x). Cada dimensão é tratada de forma independente.

O gerador de cada trial é ``default_rng(seed + trial.number)``, então a
sugestão depende apenas dos trials completos anteriores e do número do trial.
"""
import logging
import math
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from optuna.distributions import BaseDistribution
from optuna.samplers import BaseSampler, RandomSampler
from optuna.study import Study, StudyDirection
from optuna.trial import FrozenTrial, TrialState
from scipy import stats

from core.errors import ConfigError
from hpo.search_space import ParamSpec

logger = logging.getLogger(__name__)

GAMMA = 0.25
N_CANDIDATES = 24
N_STARTUP = 10
FALLBACK_SIGMA = 0.1


class _Density:
    """Mistura de uma KDE gaussiana (banda de Scott) com o prior uniforme do intervalo."""

    def __init__(self, points: np.ndarray, lo: float, hi: float):
        self.lo, self.hi = lo, hi
        self.points = np.asarray(points, dtype=np.float64)
        self.kde = None
        self.sigma = FALLBACK_SIGMA * (hi - lo)
        if len(np.unique(self.points)) >= 2:
            self.kde = stats.gaussian_kde(self.points, bw_method="scott")

    @property
    def n(self) -> int:
        return len(self.points)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.n == 0:
            return rng.uniform(self.lo, self.hi, size=n)
        if self.kde is not None:
            draws = self.kde.resample(n, seed=rng)[0]
        else:
            draws = rng.normal(self.points[0], self.sigma, size=n)
        return np.clip(draws, self.lo, self.hi)

    def logpdf(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        log_prior = np.full(z.shape, -math.log(self.hi - self.lo))
        if self.n == 0:
            return log_prior
        if self.kde is not None:
            log_kernel = self.kde.logpdf(z)
        else:
            log_kernel = stats.norm.logpdf(z, loc=self.points[0], scale=self.sigma)
        w = self.n / (self.n + 1)
        return np.logaddexp(math.log(w) + log_kernel, math.log(1 - w) + log_prior)



def _split_history(history: Sequence[FrozenTrial], gamma: float, maximize: bool) -> Tuple[List, List]:
    done = [t for t in history if t.state == TrialState.COMPLETE and t.value is not None]
    sign = -1.0 if maximize else 1.0
    ranked = sorted(done, key=lambda t: (sign * t.value, t.number))
    n_good = max(1, math.ceil(gamma * len(ranked)))
    return ranked[:n_good], ranked[n_good:]


class TpeSampler(BaseSampler):
    """Amostrador relativo: propõe a configuração inteira de uma vez sobre ``space``."""

    def __init__(self, space: Sequence[ParamSpec], seed: int = 42, gamma: float = GAMMA,
                 n_candidates: int = N_CANDIDATES, n_startup: int = N_STARTUP):
        if not space:
            raise ConfigError("espaço de busca vazio")
        if not 0 < gamma < 1:
            raise ConfigError(f"gamma deve estar em (0, 1), recebeu {gamma}")
        if n_candidates < 1:
            raise ConfigError("n_candidates deve ser >= 1")
        self.space = list(space)
        self.seed = seed
        self.gamma = gamma
        self.n_candidates = n_candidates
        self.n_startup = n_startup

    def reseed_rng(self) -> None:
        # o gerador é recriado a cada trial a partir de seed + número
        pass

    def infer_relative_search_space(self, study: Study, trial: FrozenTrial) -> Dict[str, BaseDistribution]:
        return {spec.name: spec.to_distribution() for spec in self.space}

    def sample_relative(self, study: Study, trial: FrozenTrial,
                        search_space: Dict[str, BaseDistribution]) -> Dict[str, Any]:
        if not search_space:
            return {}
        history = study.get_trials(deepcopy=False, states=(TrialState.COMPLETE,))
        config = self.propose(history, trial.number, study.direction == StudyDirection.MAXIMIZE)
        return {spec.name: spec.to_optuna(config[spec.name]) for spec in self.space if spec.name in search_space}

    def sample_independent(self, study: Study, trial: FrozenTrial, param_name: str,
                           param_distribution: BaseDistribution) -> Any:
        fallback = RandomSampler(seed=self.seed + trial.number)
        return fallback.sample_independent(study, trial, param_name, param_distribution)

    def propose(self, history: Sequence[FrozenTrial], trial_number: int, maximize: bool = True) -> Dict[str, Any]:
        """Sugere a configuração (valores nativos) do trial ``trial_number`` a partir de ``history``."""
        rng = np.random.default_rng(self.seed + trial_number)
        n_done = sum(1 for t in history if t.state == TrialState.COMPLETE and t.value is not None)

        if n_done < max(self.n_startup, 1):
            return {spec.name: spec.sample_uniform(rng) for spec in self.space}

        good, bad = _split_history(history, self.gamma, maximize)
        config = {}
        for spec in self.space:
            good_values = [self._internal(spec, t) for t in good if spec.name in t.params]
            bad_values = [self._internal(spec, t) for t in bad if spec.name in t.params]
            if spec.is_categorical:
                config[spec.name] = self._sample_categorical(spec, good_values, bad_values, rng)
            else:
                config[spec.name] = self._sample_numeric(spec, good_values, bad_values, rng)
        logger.debug(f"[HPO] Trial {trial_number}: TPE sobre {len(good)} bons / {len(bad)} ruins")
        return config

    @staticmethod
    def _internal(spec: ParamSpec, trial: FrozenTrial) -> float:
        return spec.to_internal(spec.from_optuna(trial.params[spec.name]))

    def _sample_numeric(self, spec: ParamSpec, good: List[float], bad: List[float], rng: np.random.Generator) -> Any:
        lo, hi = spec.internal_bounds
        l_density = _Density(np.array(good), lo, hi)
        g_density = _Density(np.array(bad), lo, hi)
        # candidatos passam pela grade do parâmetro antes de serem avaliados
        values = [spec.from_internal(z) for z in l_density.sample(self.n_candidates, rng)]
        z = np.array([spec.to_internal(v) for v in values])
        score = l_density.logpdf(z) - g_density.logpdf(z)
        return values[int(np.argmax(score))]

    def _sample_categorical(self, spec: ParamSpec, good: List[float], bad: List[float], rng: np.random.Generator) -> Any:
        n_values = len(spec.values)
        good_counts = np.bincount(np.asarray(good, dtype=np.int64), minlength=n_values)
        bad_counts = np.bincount(np.asarray(bad, dtype=np.int64), minlength=n_values)
        p_good = (good_counts + 1.0) / (good_counts.sum() + n_values)
        p_bad = (bad_counts + 1.0) / (bad_counts.sum() + n_values)
        candidates = rng.choice(n_values, size=self.n_candidates, p=p_good)
        score = np.log(p_good[candidates]) - np.log(p_bad[candidates])
        return spec.values[int(candidates[int(np.argmax(score))])]
