import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from pydantic import ValidationError

from core.errors import SchemaError
from learners.base import FittedModel, LearnerSpec

logger = logging.getLogger(__name__)

MODEL_ARTIFACT_VERSION = 1


def _encode(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {"__ndarray__": value.tolist(), "dtype": str(value.dtype), "shape": list(value.shape)}
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _decode(obj: Dict[str, Any]) -> Any:
    if "__ndarray__" in obj:
        return np.asarray(obj["__ndarray__"], dtype=obj["dtype"]).reshape(obj["shape"])
    return obj


def save_model(model: FittedModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    artifact = {
        "version": MODEL_ARTIFACT_VERSION,
        "spec": model.spec.model_dump(mode="json"),
        "class_list": list(model.class_list),
        "columns": list(model.columns),
        "params": _encode(model.params),
    }
    with open(path, "w", encoding="utf-8") as file:
        json.dump(artifact, file, ensure_ascii=False)
    logger.info(f"[LEARNER] Modelo {model.spec.name} salvo em {path}")
    return path


def load_model(path: Union[str, Path]) -> FittedModel:
    try:
        with open(path, "r", encoding="utf-8") as file:
            artifact = json.load(file, object_hook=_decode)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        logger.error(f"[LEARNER] Artefato de modelo ilegível {path}: {e}")
        raise SchemaError(f"artefato de modelo inválido: {e}")
    if artifact.get("version") != MODEL_ARTIFACT_VERSION:
        raise SchemaError(f"versão de artefato não suportada: {artifact.get('version')}")
    try:
        return FittedModel(
            spec=LearnerSpec.model_validate(artifact["spec"]),
            class_list=tuple(artifact["class_list"]),
            columns=tuple(artifact["columns"]),
            params=artifact["params"],
        )
    except (KeyError, ValidationError) as e:
        raise SchemaError(f"artefato de modelo incompleto: {e}")
