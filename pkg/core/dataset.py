"""
Modelo de dados das autópsias verbais: registros, taxonomia de causas,
codificação de rótulos e leitura/escrita de datasets (JSONL e CSV).
"""
import io
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import jsonlines
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from core.errors import (
    DuplicateIdError, LabelError, ParseError, SchemaError, ValidationIssue, VaForgeError,
)
from core.features import ProbMatrix

logger = logging.getLogger(__name__)

QUESTION_COLUMN = re.compile(r"^i\d+[a-z]?$")


def read_utf8(path: Union[str, Path]) -> str:
    """Conteúdo do arquivo como UTF-8; bytes inválidos viram ParseError com a linha."""
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data[:e.start].count(b"\n") + 1
        logger.error(f"[DATASET] {Path(path).name} não é UTF-8 válido (linha {line}, byte {e.start})")
        raise ParseError(f"{Path(path).name}: UTF-8 inválido ({e.reason}, byte {e.start})", line=line)


def read_utf8_csv(path: Union[str, Path], **kwargs) -> pd.DataFrame:
    """``pd.read_csv`` sobre :func:`read_utf8`; erros de parsing viram ParseError."""
    text = read_utf8(path)
    try:
        return pd.read_csv(io.StringIO(text), **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(f"{Path(path).name}: CSV inválido ({e})", line=int(match.group(1)) if match else None)


DEFAULT_LEVEL3 = (
    "HIV and pulmonary TB",
    "Non-HIV/TB infections",
    "Non-communicable causes",
    "Injuries",
    "Maternal conditions",
    "Indeterminate",
)


class Response(str, Enum):
    YES = "Yes"
    NO = "No"
    DONT_KNOW = "DontKnow"
    MISSING = "Missing"


class AgeGroup(str, Enum):
    ADULT = "adult"
    OTHER = "other"


class LabelLevel(str, Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"

    @property
    def field(self) -> str:
        return f"cause_level{self.value[1]}"

    @classmethod
    def parse(cls, value: Union[str, int, "LabelLevel"]) -> "LabelLevel":
        if isinstance(value, LabelLevel):
            return value
        text = str(value).strip().upper().replace("LEVEL", "L")
        if text.isdigit():
            text = f"L{text}"
        try:
            return cls(text)
        except ValueError:
            raise SchemaError(f"nível de rótulo inválido: '{value}' (use L1, L2 ou L3)")


# Formas aceitas na entrada. Vazio/ponto/NaN = Missing.
RESPONSE_ALIASES = {
    "yes": Response.YES, "y": Response.YES, "1": Response.YES,
    "no": Response.NO, "n": Response.NO, "0": Response.NO,
    "dontknow": Response.DONT_KNOW, "dk": Response.DONT_KNOW, "don't know": Response.DONT_KNOW,
    "missing": Response.MISSING, "": Response.MISSING, ".": Response.MISSING, "nan": Response.MISSING,
}

RESPONSE_CODES = {Response.YES: "Y", Response.NO: "N", Response.DONT_KNOW: "DK", Response.MISSING: ""}


def parse_response(value) -> Response:
    if isinstance(value, Response):
        return value
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return Response.MISSING
    key = str(value).strip().lower()
    if key not in RESPONSE_ALIASES:
        raise ValueError(f"resposta desconhecida: '{value}'")
    return RESPONSE_ALIASES[key]


class VARecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1, description="Identificador único do óbito")
    age_group: AgeGroup = Field(default=AgeGroup.ADULT)
    narrative: str = Field(default="", description="Narrativa livre da entrevista")
    questions: Dict[str, Response] = Field(default_factory=dict)
    cause_icd10: Optional[str] = None
    cause_level1: Optional[str] = None
    cause_level2: Optional[str] = None
    cause_level3: Optional[str] = None
    sufficiency_score: Optional[int] = Field(default=None, ge=1, le=5)

    @field_validator("id")
    @classmethod
    def _strip_id(cls, value: str) -> str:
        value = str(value).strip()
        if not value:
            raise ValueError("id vazio")
        return value

    @field_validator("age_group", mode="before")
    @classmethod
    def _default_age_group(cls, value):
        if value is None or (isinstance(value, str) and not value.strip()):
            return AgeGroup.ADULT
        return str(value).strip().lower() if isinstance(value, str) else value

    @field_validator("questions", mode="before")
    @classmethod
    def _parse_questions(cls, value):
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise ValueError("questions deve ser um objeto indicador -> resposta")
        return {str(k): parse_response(v) for k, v in value.items()}

    @field_validator("cause_icd10", "cause_level1", "cause_level2", "cause_level3", mode="before")
    @classmethod
    def _blank_to_none(cls, value):
        if value is None:
            return None
        value = str(value).strip()
        return value or None

    @field_validator("sufficiency_score", mode="before")
    @classmethod
    def _parse_score(cls, value):
        if value is None or (isinstance(value, str) and not value.strip()):
            return None
        if isinstance(value, float) and np.isnan(value):
            return None
        return value

    def label(self, level: LabelLevel) -> Optional[str]:
        return getattr(self, LabelLevel.parse(level).field)


@dataclass(frozen=True)
class Icd10Mapping:
    code: str
    level1: Optional[str] = None
    level2: Optional[str] = None
    level3: Optional[str] = None

    def target(self, level: LabelLevel) -> Optional[str]:
        return getattr(self, f"level{LabelLevel.parse(level).value[1]}")

    def matches(self, code: str) -> bool:
        code = _normalize_icd(code)
        spec = _normalize_icd(self.code)
        if "-" in spec:
            lo, hi = spec.split("-", 1)
            return lo <= code[: len(lo)] and code[: len(hi)] <= hi
        return code == spec


def _normalize_icd(code: str) -> str:
    return str(code).strip().upper().replace(".", "")


@dataclass(frozen=True)
class CauseTaxonomy:
    level1: Tuple[str, ...] = ()
    level2: Tuple[str, ...] = ()
    level3: Tuple[str, ...] = DEFAULT_LEVEL3
    icd10_map: Tuple[Icd10Mapping, ...] = ()

    def __post_init__(self):
        for name in ("level1", "level2", "level3"):
            classes = tuple(getattr(self, name))
            object.__setattr__(self, name, classes)
            if len(set(classes)) != len(classes):
                dup = sorted({c for c in classes if classes.count(c) > 1})
                raise SchemaError(f"taxonomia {name} com classes duplicadas: {dup}")
        object.__setattr__(self, "icd10_map", tuple(self.icd10_map))
        for mapping in self.icd10_map:
            for level in LabelLevel:
                target = mapping.target(level)
                if target is not None and target not in self.classes(level):
                    raise LabelError(
                        f"CID-10 '{mapping.code}' aponta para '{target}', ausente em {level.value}"
                    )

    def classes(self, level: Union[str, LabelLevel]) -> Tuple[str, ...]:
        level = LabelLevel.parse(level)
        return getattr(self, f"level{level.value[1]}")

    def encode(self, label: str, level: Union[str, LabelLevel]) -> int:
        classes = self.classes(level)
        try:
            return classes.index(label)
        except ValueError:
            raise LabelError(f"rótulo '{label}' não pertence à taxonomia {LabelLevel.parse(level).value}")

    def decode(self, index: int, level: Union[str, LabelLevel]) -> str:
        classes = self.classes(level)
        if not 0 <= int(index) < len(classes):
            raise LabelError(f"índice {index} fora da taxonomia {LabelLevel.parse(level).value}")
        return classes[int(index)]

    def map_icd10(self, code: Optional[str]) -> Optional[Icd10Mapping]:
        """Exato, depois faixa (A15-A19), depois prefixo de 3 caracteres."""
        if not code:
            return None
        norm = _normalize_icd(code)
        for mapping in self.icd10_map:
            if "-" not in mapping.code and _normalize_icd(mapping.code) == norm:
                return mapping
        for mapping in self.icd10_map:
            if "-" in mapping.code and mapping.matches(norm):
                return mapping
        for mapping in self.icd10_map:
            if "-" not in mapping.code and _normalize_icd(mapping.code) == norm[:3]:
                return mapping
        return None

    def parent_map(self, from_level, to_level) -> Dict[str, str]:
        """Mapa classe fina -> classe agregada, derivado das linhas CID-10."""
        from_level, to_level = LabelLevel.parse(from_level), LabelLevel.parse(to_level)
        parents: Dict[str, str] = {}
        for mapping in self.icd10_map:
            child, parent = mapping.target(from_level), mapping.target(to_level)
            if child is None or parent is None:
                continue
            if parents.get(child, parent) != parent:
                raise SchemaError(
                    f"'{child}' mapeia para '{parents[child]}' e '{parent}' em {to_level.value}"
                )
            parents[child] = parent
        missing = [c for c in self.classes(from_level) if c not in parents]
        if from_level != to_level and missing:
            raise SchemaError(f"classes sem correspondente em {to_level.value}: {missing[:5]}")
        if from_level == to_level:
            return {c: c for c in self.classes(from_level)}
        return parents


def load_taxonomy(path: Union[str, Path]) -> CauseTaxonomy:
    """Lê a taxonomia em CSV ``icd10,level1,level2,level3``.

    A ordem das classes é a ordem de primeira aparição no arquivo. Linhas com
    icd10 vazio apenas declaram classes.
    """
    path = Path(path)
    if not path.exists():
        logger.error(f"[DATASET] Taxonomia não encontrada: {path.absolute()}")
        raise FileNotFoundError(f"Taxonomia não encontrada: {path.absolute()}")

    frame = read_utf8_csv(path, dtype=str, keep_default_na=False)
    required = ["icd10", "level1", "level2", "level3"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"taxonomia sem colunas obrigatórias: {missing}")

    levels: Dict[str, List[str]] = {"level1": [], "level2": [], "level3": []}
    mappings: List[Icd10Mapping] = []
    for _, row in frame.iterrows():
        values = {name: row[name].strip() or None for name in levels}
        for name, value in values.items():
            if value is not None and value not in levels[name]:
                levels[name].append(value)
        code = row["icd10"].strip()
        if code:
            mappings.append(Icd10Mapping(code, **values))

    level3 = tuple(levels["level3"]) or DEFAULT_LEVEL3
    taxonomy = CauseTaxonomy(tuple(levels["level1"]), tuple(levels["level2"]), level3, tuple(mappings))
    logger.info(
        f"[DATASET] Taxonomia carregada: {len(taxonomy.level1)}/{len(taxonomy.level2)}/"
        f"{len(taxonomy.level3)} classes, {len(mappings)} mapeamentos CID-10"
    )
    return taxonomy


@dataclass(frozen=True)
class Dataset:
    records: Tuple[VARecord, ...]
    taxonomy: CauseTaxonomy
    label_level: LabelLevel = LabelLevel.L3
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "label_level", LabelLevel.parse(self.label_level))
        index: Dict[str, int] = {}
        for i, rec in enumerate(self.records):
            if rec.id in index:
                raise DuplicateIdError(f"id duplicado no dataset: '{rec.id}'")
            index[rec.id] = i
            for level in LabelLevel:
                label = rec.label(level)
                if label is not None and label not in self.taxonomy.classes(level):
                    raise LabelError(f"registro '{rec.id}': '{label}' não pertence a {level.value}")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def classes(self) -> Tuple[str, ...]:
        return self.taxonomy.classes(self.label_level)

    @property
    def ids(self) -> List[str]:
        return [r.id for r in self.records]

    def get(self, record_id: str) -> VARecord:
        return self.records[self._index[record_id]]

    def label_of(self, record_id: str) -> Optional[str]:
        return self.get(record_id).label(self.label_level)

    def labeled_ids(self) -> List[str]:
        return [r.id for r in self.records if r.label(self.label_level) is not None]

    def labels(self, ids: Optional[Sequence[str]] = None) -> List[str]:
        ids = self.labeled_ids() if ids is None else ids
        labels = [self.label_of(rid) for rid in ids]
        unlabeled = [rid for rid, lab in zip(ids, labels) if lab is None]
        if unlabeled:
            raise LabelError(f"registros sem rótulo {self.label_level.value}: {unlabeled[:5]}")
        return labels

    def encoded_labels(self, ids: Optional[Sequence[str]] = None) -> np.ndarray:
        return np.array([self.taxonomy.encode(lab, self.label_level) for lab in self.labels(ids)], dtype=int)

    def subset(self, ids: Iterable[str]) -> "Dataset":
        wanted = set(ids)
        unknown = wanted.difference(self._index)
        if unknown:
            raise VaForgeError(f"ids desconhecidos: {sorted(unknown)[:5]}")
        return Dataset(tuple(r for r in self.records if r.id in wanted), self.taxonomy, self.label_level)

    def with_level(self, level) -> "Dataset":
        return Dataset(self.records, self.taxonomy, LabelLevel.parse(level))


def filter_records(ds: Dataset, predicate: Callable[[VARecord], bool]) -> Dataset:
    return Dataset(tuple(r for r in ds.records if predicate(r)), ds.taxonomy, ds.label_level)


def _fill_from_icd10(data: dict, taxonomy: CauseTaxonomy) -> dict:
    mapping = taxonomy.map_icd10(data.get("cause_icd10"))
    if mapping is None:
        return data
    for level in LabelLevel:
        if not data.get(level.field) and mapping.target(level) is not None:
            data[level.field] = mapping.target(level)
    return data


def _label_issues(record: VARecord, taxonomy: CauseTaxonomy, line: Optional[int]) -> List[ValidationIssue]:
    issues = []
    for level in LabelLevel:
        label = record.label(level)
        if label is not None and label not in taxonomy.classes(level):
            issues.append(ValidationIssue(line, record.id, f"{level.field}='{label}' fora da taxonomia", "label"))
    return issues


def _iter_jsonl(path: Path):
    numbered = [(n, raw) for n, raw in enumerate(io.StringIO(read_utf8(path)), start=1) if raw.strip()]
    reader = jsonlines.Reader(raw for _, raw in numbered)
    try:
        for (line_no, _), obj in zip(numbered, reader.iter(type=dict)):
            yield line_no, obj
    except jsonlines.InvalidLineError as e:
        line_no = numbered[e.lineno - 1][0] if 0 < e.lineno <= len(numbered) else e.lineno
        raise ParseError(f"JSON inválido ({e})", line=line_no)


def _iter_csv(path: Path):
    frame = read_utf8_csv(path, dtype=str, keep_default_na=False)

    question_cols = [c for c in frame.columns if QUESTION_COLUMN.match(str(c))]
    for c in ("id", "narrative"):
        if c not in frame.columns:
            raise SchemaError(f"coluna obrigatória ausente no CSV: '{c}'")
    scalar_cols = [c for c in frame.columns if c not in question_cols]
    for pos, row in enumerate(frame.itertuples(index=False)):
        row = dict(zip(frame.columns, row))
        data = {c: row[c] for c in scalar_cols}
        data["questions"] = {c: row[c] for c in question_cols}
        yield pos + 2, data


def load_dataset(path: Union[str, Path], format: Optional[str], taxonomy: CauseTaxonomy,
                 level: Union[str, LabelLevel] = LabelLevel.L3) -> Dataset:
    """Carrega e valida um dataset.

    Registros inválidos não são descartados em silêncio: todos são coletados e
    a exceção levantada carrega a lista completa em ``issues``.
    """
    path = Path(path)
    level = LabelLevel.parse(level)
    if not path.exists():
        logger.error(f"[DATASET] Arquivo não encontrado: {path.absolute()}")
        raise FileNotFoundError(f"Arquivo não encontrado: {path.absolute()}")
    format = (format or path.suffix.lstrip(".")).lower()
    if format not in ("jsonl", "csv"):
        raise SchemaError(f"formato não suportado: '{format}'")

    rows = _iter_jsonl(path) if format == "jsonl" else _iter_csv(path)
    records: List[VARecord] = []
    issues: List[ValidationIssue] = []
    seen: Dict[str, int] = {}

    for line_no, data in rows:
        rid = str(data.get("id", "")).strip() or f"<linha {line_no}>"
        if format == "jsonl":
            absent = [k for k in ("id", "narrative", "questions") if k not in data]
            if absent:
                issues.append(ValidationIssue(line_no, rid, f"campos ausentes: {absent}", "schema"))
                continue
        data = {k: v for k, v in data.items() if k in VARecord.model_fields}
        data = _fill_from_icd10(data, taxonomy)
        try:
            record = VARecord.model_validate(data)
        except ValidationError as e:
            reason = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
            issues.append(ValidationIssue(line_no, rid, reason, "schema"))
            continue
        if record.id in seen:
            issues.append(ValidationIssue(line_no, record.id, f"id repetido (linha {seen[record.id]})", "duplicate"))
            continue
        label_issues = _label_issues(record, taxonomy, line_no)
        if label_issues:
            issues.extend(label_issues)
            continue
        seen[record.id] = line_no
        records.append(record)

    if issues:
        for issue in issues:
            logger.warning(f"[DATASET] Registro inválido {issue}")
        first = issues[0]
        message = f"{len(issues)} registro(s) inválido(s) em {path.name}; primeiro: linha {first.line} ({first.record_id}): {first.reason}"
        error_cls = {"label": LabelError, "duplicate": DuplicateIdError}.get(first.kind, SchemaError)
        raise error_cls(message, issues)

    logger.info(f"[DATASET] {len(records)} registros carregados de {path.name} (nível {level.value})")
    return Dataset(tuple(records), taxonomy, level)


def write_dataset(ds: Dataset, path: Union[str, Path], format: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    format = (format or path.suffix.lstrip(".")).lower()

    if format == "jsonl":
        with jsonlines.open(path, mode="w") as writer:
            for rec in ds.records:
                writer.write(rec.model_dump(mode="json"))
    elif format == "csv":
        indicators = sorted({k for r in ds.records for k in r.questions})
        rows = []
        for rec in ds.records:
            row = rec.model_dump(mode="json", exclude={"questions"})
            row = {k: ("" if v is None else v) for k, v in row.items()}
            for ind in indicators:
                row[ind] = RESPONSE_CODES[rec.questions.get(ind, Response.MISSING)]
            rows.append(row)
        columns = list(VARecord.model_fields.keys())
        columns.remove("questions")
        pd.DataFrame(rows, columns=columns + indicators).to_csv(
            path, index=False, encoding="utf-8", lineterminator="\n"
        )
    else:
        raise SchemaError(f"formato não suportado: '{format}'")

    logger.info(f"[DATASET] {len(ds)} registros gravados em {path}")
    return path


def collapse_probabilities(pm: ProbMatrix, taxonomy: CauseTaxonomy, from_level, to_level) -> ProbMatrix:
    """Soma as probabilidades das classes finas em suas classes agregadas."""
    parents = taxonomy.parent_map(from_level, to_level)
    coarse = taxonomy.classes(to_level)
    pm = pm.reorder_classes(taxonomy.classes(from_level))
    values = np.zeros((pm.n_rows, len(coarse)))
    for j, fine in enumerate(pm.classes):
        values[:, coarse.index(parents[fine])] += pm.values[:, j]
    return ProbMatrix(pm.ids, coarse, values)
