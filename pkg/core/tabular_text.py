"""
Conversão das respostas do questionário em frases e montagem do documento
fundido (narrativa + frases) usado na fusão no nível dos dados.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from core.dataset import Response, VARecord, parse_response, read_utf8_csv
from core.errors import ParseError, SchemaError, UnknownIndicatorError

logger = logging.getLogger(__name__)

TEMPLATES_FILE = Path(__file__).resolve().parent.parent / "config" / "question_templates.csv"

SEPARATOR = "\n"
DEFAULT_SKIP = frozenset({Response.MISSING, Response.DONT_KNOW})
# i019a (masculino) / i019b (feminino) viram uma única frase de sexo
SEX_PAIR = ("i019a", "i019b")


@dataclass(frozen=True)
class QuestionTemplate:
    indicator: str
    yes_text: str
    no_text: Optional[str] = None
    skip_on: FrozenSet[Response] = DEFAULT_SKIP

    def __post_init__(self):
        if not self.yes_text or not self.yes_text.strip():
            raise SchemaError(f"{self.indicator}: yes_text vazio")
        for text in (self.yes_text, self.no_text):
            if text is not None and not text.rstrip().endswith("."):
                raise SchemaError(f"{self.indicator}: frase sem ponto final: '{text}'")
        object.__setattr__(self, "skip_on", frozenset(self.skip_on))


@dataclass(frozen=True)
class TemplateTable:
    templates: Dict[str, QuestionTemplate]
    render_order: Tuple[str, ...]
    exclusive_groups: Tuple[Tuple[str, ...], ...] = field(default=(SEX_PAIR,))

    def __post_init__(self):
        object.__setattr__(self, "render_order", tuple(self.render_order))
        if len(set(self.render_order)) != len(self.render_order):
            raise SchemaError("render_order com indicador duplicado")
        missing = [ind for ind in self.render_order if ind not in self.templates]
        if missing:
            raise SchemaError(f"render_order sem template: {missing}")

    def __contains__(self, indicator: str) -> bool:
        return indicator in self.templates

    def group_of(self, indicator: str) -> Optional[Tuple[str, ...]]:
        for group in self.exclusive_groups:
            if indicator in group:
                return group
        return None


def render_question(indicator: str, response: Union[Response, str], table: TemplateTable) -> Optional[str]:
    template = table.templates.get(indicator)
    if template is None:
        raise UnknownIndicatorError(f"indicador sem template: '{indicator}'")
    response = parse_response(response) if not isinstance(response, Response) else response
    if response in template.skip_on:
        return None
    if response is Response.YES:
        return template.yes_text
    if response is Response.NO:
        return template.no_text
    return None


def _render_group(group: Sequence[str], questions: Dict[str, Response], table: TemplateTable) -> Optional[str]:
    # só a primeira resposta "Yes" do grupo gera frase
    for indicator in group:
        if indicator in table and questions.get(indicator) is Response.YES:
            return render_question(indicator, Response.YES, table)
    return None


def render_sentences(questions: Dict[str, Response], table: TemplateTable) -> List[str]:
    sentences: List[str] = []
    done_groups = set()
    for indicator in table.render_order:
        group = table.group_of(indicator)
        if group is not None:
            if group in done_groups:
                continue
            done_groups.add(group)
            sentence = _render_group(group, questions, table)
        else:
            sentence = render_question(indicator, questions.get(indicator, Response.MISSING), table)
        if sentence:
            sentences.append(sentence)
    return sentences


def build_fused_document(rec: VARecord, table: TemplateTable) -> str:
    """Narrativa, uma linha separadora e as frases na ordem de render_order."""
    unknown = sorted(set(rec.questions) - set(table.templates))
    if unknown:
        logger.debug(f"[TEMPLATE] {rec.id}: {len(unknown)} indicadores sem template ignorados")
    return rec.narrative + SEPARATOR + " ".join(render_sentences(rec.questions, table))


def build_fused_documents(records: Iterable[VARecord], table: TemplateTable) -> Dict[str, str]:
    documents = {rec.id: build_fused_document(rec, table) for rec in records}
    logger.info(f"[TEMPLATE] {len(documents)} documentos fundidos gerados")
    return documents


def _parse_skip_on(raw: str, indicator: str) -> FrozenSet[Response]:
    if not raw or not raw.strip():
        return DEFAULT_SKIP
    try:
        return frozenset(parse_response(part.strip()) for part in raw.split("|"))
    except ValueError as e:
        raise SchemaError(f"{indicator}: skip_on inválido '{raw}': {e}")


def load_template_table(path: Union[str, Path] = TEMPLATES_FILE) -> TemplateTable:
    """CSV ``indicator,yes_text,no_text,skip_on``; a ordem das linhas define render_order.

    ``skip_on`` lista respostas separadas por ``|`` (vazio = Missing|DontKnow).
    """
    path = Path(path)
    try:
        frame = read_utf8_csv(path, dtype=str, keep_default_na=False)
    except (OSError, ParseError) as e:
        logger.error(f"[TEMPLATE] Erro ao ler {path}: {e}")
        raise SchemaError(f"tabela de templates ilegível: {e}")

    required = {"indicator", "yes_text", "no_text", "skip_on"}
    if not required.issubset(frame.columns):
        raise SchemaError(f"colunas obrigatórias ausentes: {sorted(required - set(frame.columns))}")

    templates: Dict[str, QuestionTemplate] = {}
    order: List[str] = []
    for row in frame.itertuples(index=False):
        indicator = row.indicator.strip()
        if indicator in templates:
            raise SchemaError(f"indicador duplicado na tabela de templates: '{indicator}'")
        templates[indicator] = QuestionTemplate(
            indicator=indicator,
            yes_text=row.yes_text.strip(),
            no_text=row.no_text.strip() or None,
            skip_on=_parse_skip_on(row.skip_on, indicator),
        )
        order.append(indicator)

    logger.info(f"[TEMPLATE] {len(templates)} templates carregados de {path.name}")
    return TemplateTable(templates, tuple(order))
