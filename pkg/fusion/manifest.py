import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.errors import ConfigError
from learners.base import LearnerSpec

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 2


class EnsembleManifest(BaseModel):
    """Tudo o que é preciso para repetir uma execução de ensemble.

    A repetição não consulta a configuração corrente para nenhum campo
    gravado aqui: texto, filtros do dataset, split e learners vêm do manifesto.
    """
    model_config = ConfigDict(frozen=True)

    version: int = MANIFEST_VERSION
    strategy: str = Field(..., description="single, feature_fusion, data_fusion, soft_vote ou stacking")
    label_level: str = "L3"
    seed: int = 42
    test_fraction: float = 0.2
    k: int = Field(default=5, ge=2)
    base_specs: List[LearnerSpec] = Field(default_factory=list)
    meta_spec: Optional[LearnerSpec] = None
    sources: List[str] = Field(default_factory=list, description="Membros do ensemble; vazio = todos")
    dataset: Optional[str] = None
    format: Optional[str] = None
    test_dataset: Optional[str] = None
    taxonomy: Optional[str] = None
    templates: Optional[str] = None
    adults_only: bool = False
    drop_invalid_narratives: bool = False
    text: Dict[str, Any] = Field(default_factory=dict, description="Configuração completa do texto")
    static_sources: List[str] = Field(default_factory=list)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.model_dump(mode="json"), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        logger.info(f"[ENSEMBLE] Manifesto salvo em {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EnsembleManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                manifest = cls.model_validate(json.load(f))
        except (json.JSONDecodeError, UnicodeDecodeError, ValidationError) as e:
            logger.error(f"[ENSEMBLE] Manifesto inválido {path}: {e}")
            raise ConfigError(f"manifesto inválido: {e}")
        if manifest.version != MANIFEST_VERSION:
            raise ConfigError(f"versão de manifesto não suportada: {manifest.version}")
        return manifest
