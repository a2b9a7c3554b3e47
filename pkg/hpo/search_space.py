"""
Espaços de busca de hiperparâmetros.

Cada ParamSpec tem um espaço interno contínuo onde o amostrador trabalha:
log(v) para log_uniform, v para uniform/integer e o índice para categorical.
No optuna, categóricos são guardados pelo índice, já que os valores podem
ser listas (``hidden_layer_sizes``).
"""
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from optuna.distributions import BaseDistribution, CategoricalDistribution, FloatDistribution, IntDistribution
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from core.errors import ConfigError

logger = logging.getLogger(__name__)

SEARCH_SPACES_FILE = Path(__file__).resolve().parent.parent / "config" / "search_spaces.json"


class ParamKind(str, Enum):
    LOG_UNIFORM = "log_uniform"
    UNIFORM = "uniform"
    CATEGORICAL = "categorical"
    INTEGER = "integer"


class ParamSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: ParamKind
    lo: Optional[float] = None
    hi: Optional[float] = None
    values: Optional[List[Any]] = None
    step: Optional[int] = None

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.kind is ParamKind.CATEGORICAL:
            if not self.values:
                raise ValueError(f"{self.name}: categorical sem valores")
            return self
        if self.lo is None or self.hi is None or not self.lo < self.hi:
            raise ValueError(f"{self.name}: exige lo < hi (lo={self.lo}, hi={self.hi})")
        if self.kind is ParamKind.LOG_UNIFORM and self.lo <= 0:
            raise ValueError(f"{self.name}: log_uniform exige lo > 0")
        if self.kind is ParamKind.INTEGER:
            if self.lo != int(self.lo) or self.hi != int(self.hi):
                raise ValueError(f"{self.name}: integer exige limites inteiros")
            if self.step is not None and self.step < 1:
                raise ValueError(f"{self.name}: step deve ser >= 1")
        return self

    @property
    def is_categorical(self) -> bool:
        return self.kind is ParamKind.CATEGORICAL

    @property
    def internal_bounds(self) -> tuple:
        if self.kind is ParamKind.LOG_UNIFORM:
            return math.log(self.lo), math.log(self.hi)
        if self.is_categorical:
            return 0, len(self.values) - 1
        return float(self.lo), float(self.hi)

    def to_internal(self, value: Any) -> float:
        if self.kind is ParamKind.LOG_UNIFORM:
            return math.log(value)
        if self.is_categorical:
            return float(self.index_of(value))
        return float(value)

    def index_of(self, value: Any) -> int:
        for i, v in enumerate(self.values):
            if v == value or (isinstance(v, list) and isinstance(value, (list, tuple)) and list(value) == v):
                return i
        raise ConfigError(f"{self.name}: valor fora das categorias: {value!r}")

    def from_internal(self, z: float) -> Any:
        """Converte do espaço interno, sempre dentro dos limites."""
        lo, hi = self.internal_bounds
        z = min(max(float(z), lo), hi)
        if self.kind is ParamKind.LOG_UNIFORM:
            return float(min(max(math.exp(z), self.lo), self.hi))
        if self.is_categorical:
            return self.values[int(round(z))]
        if self.kind is ParamKind.INTEGER:
            step = self.step or 1
            n_steps = int((self.hi - self.lo) // step)
            k = min(max(int(round((z - self.lo) / step)), 0), n_steps)
            return int(self.lo) + k * step
        return z

    def sample_uniform(self, rng: np.random.Generator) -> Any:
        """Amostra uniforme (no espaço log para log_uniform)."""
        if self.is_categorical:
            return self.values[int(rng.integers(len(self.values)))]
        if self.kind is ParamKind.INTEGER:
            step = self.step or 1
            n_steps = int((self.hi - self.lo) // step)
            return int(self.lo) + int(rng.integers(n_steps + 1)) * step
        lo, hi = self.internal_bounds
        return self.from_internal(rng.uniform(lo, hi))

    def contains(self, value: Any) -> bool:
        if self.is_categorical:
            try:
                self.index_of(value)
                return True
            except ConfigError:
                return False
        if self.kind is ParamKind.INTEGER:
            step = self.step or 1
            return self.lo <= value <= self.hi and (value - self.lo) % step == 0
        return self.lo <= value <= self.hi

    def to_distribution(self) -> BaseDistribution:
        if self.is_categorical:
            return CategoricalDistribution(tuple(range(len(self.values))))
        if self.kind is ParamKind.INTEGER:
            step = self.step or 1
            top = int(self.lo) + int((self.hi - self.lo) // step) * step
            return IntDistribution(int(self.lo), top, step=step)
        return FloatDistribution(float(self.lo), float(self.hi), log=self.kind is ParamKind.LOG_UNIFORM)

    def to_optuna(self, value: Any) -> Any:
        return self.index_of(value) if self.is_categorical else value

    def from_optuna(self, raw: Any) -> Any:
        return self.values[int(raw)] if self.is_categorical else raw

    def suggest(self, trial) -> Any:
        """Pede o valor ao trial do optuna e devolve já no domínio nativo."""
        distribution = self.to_distribution()
        if isinstance(distribution, CategoricalDistribution):
            return self.from_optuna(trial.suggest_categorical(self.name, distribution.choices))
        if isinstance(distribution, IntDistribution):
            return trial.suggest_int(self.name, distribution.low, distribution.high, step=distribution.step)
        return trial.suggest_float(self.name, distribution.low, distribution.high, log=distribution.log)


def parse_search_space(items: Sequence[Dict[str, Any]]) -> List[ParamSpec]:
    specs = []
    for i, item in enumerate(items):
        try:
            specs.append(ParamSpec.model_validate(item))
        except ValidationError as e:
            raise ConfigError(f"parâmetro {i} do espaço de busca inválido: {e}")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"parâmetros repetidos no espaço de busca: {names}")
    if not specs:
        raise ConfigError("espaço de busca vazio")
    return specs


def load_search_space(preset_or_items: Union[str, Sequence[Dict[str, Any]]],
                      path: Union[str, Path] = SEARCH_SPACES_FILE) -> List[ParamSpec]:
    """Um preset embarcado (``plm``, ``gbdt``, ``mlp``, ``logreg``, ``knn``) ou uma lista de dicts."""
    if not isinstance(preset_or_items, str):
        return parse_search_space(preset_or_items)
    with open(path, "r", encoding="utf-8") as f:
        presets = json.load(f)
    if preset_or_items not in presets:
        raise ConfigError(f"preset de busca desconhecido: '{preset_or_items}' (disponíveis: {sorted(presets)})")
    specs = parse_search_space(presets[preset_or_items])
    logger.debug(f"[HPO] Preset '{preset_or_items}' com {len(specs)} parâmetros")
    return specs
