import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from cli.config import (
    DEFAULT_FOLDS, DEFAULT_OUTPUT_DIR, DEFAULT_SEED, DEFAULT_SVD_K, DEFAULT_TEST_FRACTION,
    TAXONOMY_FILE, TEMPLATES_FILE,
)
from core.dataset import LabelLevel
from core.errors import ConfigError
from hpo.study import Direction, PrunerConfig, StudyConfig
from learners.base import LearnerKind, LearnerSpec, Modality
from sufficiency.analysis import SUFFICIENCY_MODALITIES

STRATEGIES = ("single", "feature_fusion", "data_fusion", "soft_vote", "stacking")


class LearnerConfig(BaseModel):
    kind: LearnerKind = Field(..., description="logreg, mlp, gbdt, knn ou external")
    name: Optional[str] = Field(default=None, description="Nome único; padrão kind:modality")
    modality: Modality = Field(default=Modality.QUESTIONS, description="Bloco de atributos usado no treino")
    hyperparams: Dict[str, Any] = Field(default_factory=dict, description="Sobrepõe os defaults do tipo")
    seed: int = Field(default=0, description="Seed do learner")

    model_config = ConfigDict(json_schema_extra={
        "example": {"kind": "gbdt", "name": "gbdt-questions", "modality": "questions",
                    "hyperparams": {"n_estimators": 100, "max_depth": 3}, "seed": 0}
    })

    def to_spec(self) -> LearnerSpec:
        try:
            return LearnerSpec.model_validate(self.model_dump(mode="json"))
        except ValidationError as e:
            raise ConfigError(f"learner '{self.name or self.kind.value}' inválido: {e}")


class TextSettings(BaseModel):
    svd_k: int = Field(default=DEFAULT_SVD_K, ge=1, description="Componentes SVD retidos")
    ngram_range: Tuple[int, int] = Field(default=(1, 2), description="Faixa de n-gramas")
    min_df: int = Field(default=2, ge=1, description="Frequência mínima de documento")
    max_features: Optional[int] = Field(default=None, ge=1, description="Tamanho máximo do vocabulário")
    lowercase: bool = True
    strip_punctuation: bool = True
    remove_stopwords: bool = True
    lemmatize: bool = True

    @field_validator("ngram_range")
    @classmethod
    def _check_range(cls, value):
        lo, hi = value
        if lo < 1 or hi < lo:
            raise ValueError(f"ngram_range inválido: {value}")
        return value


class StudySettings(BaseModel):
    learner: Optional[str] = Field(default=None, description="Learner a otimizar; padrão o primeiro")
    preset: Optional[str] = Field(default=None, description="Preset de config/search_spaces.json")
    space: Optional[List[Dict[str, Any]]] = Field(default=None, description="Espaço de busca explícito")
    n_trials: int = Field(default=30, ge=1)
    direction: Direction = Direction.MAXIMIZE
    warmup_steps: int = Field(default=1, ge=0)
    startup_trials: int = Field(default=5, ge=0)
    n_startup: int = Field(default=10, ge=0, description="Trials uniformes antes do TPE")
    k: int = Field(default=DEFAULT_FOLDS, ge=2, description="Folds da validação cruzada")

    @model_validator(mode="after")
    def _one_space(self):
        if self.preset and self.space:
            raise ValueError("use preset ou space, não os dois")
        return self

    def to_study(self, seed: int) -> StudyConfig:
        return StudyConfig(
            n_trials=self.n_trials,
            direction=self.direction,
            pruner=PrunerConfig(warmup_steps=self.warmup_steps, startup_trials=self.startup_trials),
            seed=seed,
            n_startup=self.n_startup,
        )


class EnsembleSettings(BaseModel):
    strategy: str = Field(default="single", description=f"Uma de {STRATEGIES}")
    meta: Optional[LearnerConfig] = Field(default=None, description="Meta-learner do stacking")
    k: int = Field(default=DEFAULT_FOLDS, ge=2, description="Folds para as predições fora do fold")
    sources: List[str] = Field(default_factory=list, description="Learners que entram no ensemble; vazio = todos")
    groups: Dict[str, List[str]] = Field(default_factory=dict, description="Grupos de modalidade para a ablação")

    @field_validator("strategy")
    @classmethod
    def _check_strategy(cls, value: str) -> str:
        if value not in STRATEGIES:
            raise ValueError(f"estratégia '{value}' inválida; use uma de {STRATEGIES}")
        return value


class SufficiencySettings(BaseModel):
    svd_k: int = Field(default=DEFAULT_SVD_K, ge=1)
    learner: Optional[LearnerConfig] = Field(default=None, description="Padrão: regressão logística")
    learners: Dict[str, LearnerConfig] = Field(
        default_factory=dict, description="Learner por modalidade: narrative, questions ou feature_fusion",
    )
    test_fraction: float = Field(default=DEFAULT_TEST_FRACTION, gt=0, lt=1)
    shapley_samples: int = Field(default=100, ge=1, description="Permutações por linha acima de 8 atributos")
    shapley_rows: int = Field(default=50, ge=1, description="Linhas de teste explicadas")
    top: int = Field(default=10, ge=1, description="Atributos no relatório de importância")

    @field_validator("learners")
    @classmethod
    def _check_modalities(cls, value):
        unknown = sorted(set(value) - set(SUFFICIENCY_MODALITIES))
        if unknown:
            raise ValueError(f"modalidades de suficiência desconhecidas: {unknown}; use {SUFFICIENCY_MODALITIES}")
        return value


class ReportSettings(BaseModel):
    bootstrap: int = Field(default=0, ge=0, description="Reamostragens do intervalo de acurácia; 0 desliga")
    alpha: float = Field(default=0.05, gt=0, lt=1, description="Nível do intervalo percentil")
    levels: List[str] = Field(default_factory=list, description="Níveis agregados avaliados além do nível dos rótulos")
    top_ngrams: int = Field(default=10, ge=1, description="N-gramas por componente SVD em artifacts/top_ngrams_*.json")

    @field_validator("levels")
    @classmethod
    def _parse_levels(cls, value):
        return [LabelLevel.parse(level).value for level in value]


class RunConfig(BaseModel):
    dataset: str = Field(..., description="Arquivo JSONL ou CSV de autópsias verbais")
    format: Optional[str] = Field(default=None, description="jsonl ou csv; padrão pela extensão")
    test_dataset: Optional[str] = Field(default=None, description="Hold-out fixo; sem ele o split é estratificado")
    taxonomy: str = Field(default=str(TAXONOMY_FILE), description="CSV icd10,level1,level2,level3")
    templates: str = Field(default=str(TEMPLATES_FILE), description="Tabela de templates de perguntas")
    label_level: str = Field(default="L3", description="L1, L2 ou L3")
    adults_only: bool = Field(default=False, description="Mantém só registros de adultos")
    drop_invalid_narratives: bool = Field(default=False, description="Remove narrativas vazias ou sentinela")
    seed: int = Field(default=DEFAULT_SEED)
    test_fraction: float = Field(default=DEFAULT_TEST_FRACTION, gt=0, lt=1)
    learners: List[LearnerConfig] = Field(default_factory=list)
    text: TextSettings = Field(default_factory=TextSettings)
    ensemble: EnsembleSettings = Field(default_factory=EnsembleSettings)
    study: StudySettings = Field(default_factory=StudySettings)
    sufficiency: SufficiencySettings = Field(default_factory=SufficiencySettings)
    report: ReportSettings = Field(default_factory=ReportSettings)
    output_dir: str = Field(default=DEFAULT_OUTPUT_DIR)

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "dataset": "data/va.jsonl",
            "label_level": "L3",
            "learners": [{"kind": "logreg", "modality": "questions"}, {"kind": "knn", "modality": "narrative"}],
            "ensemble": {"strategy": "soft_vote"},
            "output_dir": "results",
        }
    })

    @model_validator(mode="after")
    def _unique_learners(self):
        names = [c.to_spec().name for c in self.learners]
        if len(set(names)) != len(names):
            raise ValueError(f"nomes de learner repetidos: {names}")
        return self

    @model_validator(mode="after")
    def _other_levels(self):
        level = LabelLevel.parse(self.label_level).value
        if level in self.report.levels:
            raise ValueError(f"report.levels não pode repetir o nível dos rótulos ({level})")
        return self

    def learner_specs(self) -> List[LearnerSpec]:
        return [c.to_spec() for c in self.learners]

    def resolve_paths(self, base_dir: Union[str, Path]) -> "RunConfig":
        """Caminhos relativos passam a ser relativos ao diretório do arquivo de configuração."""
        base_dir = Path(base_dir)

        def resolve(value: Optional[str]) -> Optional[str]:
            if value is None or Path(value).is_absolute():
                return value
            return str((base_dir / value).resolve())

        learners = []
        for c in self.learners:
            if c.kind is LearnerKind.EXTERNAL and c.hyperparams.get("path"):
                c = c.model_copy(update={"hyperparams": {**c.hyperparams, "path": resolve(c.hyperparams["path"])}})
            learners.append(c)
        return self.model_copy(update={
            "dataset": resolve(self.dataset),
            "test_dataset": resolve(self.test_dataset),
            "taxonomy": resolve(self.taxonomy),
            "templates": resolve(self.templates),
            "output_dir": resolve(self.output_dir),
            "learners": learners,
        })

    def check_paths(self) -> List[str]:
        """Arquivos referenciados que não existem."""
        paths = [self.dataset, self.taxonomy, self.templates, self.test_dataset]
        paths += [c.hyperparams.get("path") for c in self.learners if c.kind is LearnerKind.EXTERNAL]
        return [p for p in paths if p is not None and not Path(p).exists()]


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"arquivo de configuração não encontrado: {path.absolute()}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            config = RunConfig.model_validate(json.load(f))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"configuração com JSON inválido: {e}")
    except ValidationError as e:
        raise ConfigError(f"configuração inválida: {e}")
    return config.resolve_paths(path.parent)
