"""
Gerador de autópsias verbais sintéticas.

Serve para testes, exemplos e checagens de sanidade dos pipelines. Cada
causa recebe um perfil de respostas e um vocabulário próprio de narrativa;
quanto menor a suficiência do registro, mais ruído ele carrega.
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.dataset import CauseTaxonomy, Dataset, LabelLevel, Response, VARecord
from core.tabular_text import load_template_table

logger = logging.getLogger(__name__)

FILLER_WORDS = (
    "the", "family", "said", "that", "she", "he", "was", "taken", "to", "hospital",
    "clinic", "home", "days", "weeks", "before", "death", "and", "later",
)
SYMPTOM_WORDS = (
    "cough", "fever", "weight", "loss", "diarrhoea", "vomiting", "headache", "chest",
    "pain", "swelling", "bleeding", "breath", "accident", "injury", "wound", "pregnant",
    "delivery", "rash", "seizure", "weakness", "jaundice", "sweat", "night", "stiff",
)


def default_indicators() -> List[str]:
    return list(load_template_table().render_order)


def _class_profiles(n_classes: int, n_indicators: int, rng: np.random.Generator):
    yes_prob = rng.uniform(0.05, 0.95, size=(n_classes, n_indicators))
    words = []
    for _ in range(n_classes):
        words.append(list(rng.choice(SYMPTOM_WORDS, size=4, replace=False)))
    return yes_prob, words


def _labels_for(taxonomy: CauseTaxonomy, cause: str) -> Dict[str, Optional[str]]:
    for mapping in taxonomy.icd10_map:
        if mapping.level3 == cause:
            return {"cause_icd10": None, "cause_level1": mapping.level1,
                    "cause_level2": mapping.level2, "cause_level3": cause}
    return {"cause_level3": cause}


def make_synthetic_dataset(taxonomy: Optional[CauseTaxonomy] = None, n_per_class: int = 20,
                           indicators: Optional[Sequence[str]] = None, seed: int = 0,
                           noise: float = 0.1, missing_rate: float = 0.05,
                           classes: Optional[Sequence[str]] = None) -> Dataset:
    """Dataset L3 balanceado com ``n_per_class`` registros por causa.

    ``noise`` é a probabilidade base de trocar a resposta de um indicador ou
    uma palavra da narrativa; registros com suficiência baixa recebem até o
    dobro. ``missing_rate`` marca respostas como Missing.
    """
    taxonomy = taxonomy or CauseTaxonomy()
    classes = list(classes or taxonomy.level3)
    indicators = list(indicators or default_indicators())
    rng = np.random.default_rng(seed)
    yes_prob, words = _class_profiles(len(classes), len(indicators), rng)

    records = []
    for c, cause in enumerate(classes):
        for j in range(n_per_class):
            sufficiency = int(rng.integers(1, 6))
            flip = noise * (2.0 - (sufficiency - 1) / 4)
            questions = {}
            for q, indicator in enumerate(indicators):
                if rng.random() < missing_rate:
                    questions[indicator] = Response.MISSING
                    continue
                yes = rng.random() < yes_prob[c, q]
                if rng.random() < flip:
                    yes = not yes
                questions[indicator] = Response.YES if yes else Response.NO
            tokens = list(rng.choice(FILLER_WORDS, size=6))
            for word in words[c]:
                tokens.append(word if rng.random() >= flip else str(rng.choice(SYMPTOM_WORDS)))
            rng.shuffle(tokens)
            records.append(VARecord(
                id=f"{c:02d}-{j:04d}",
                narrative=" ".join(tokens) + ".",
                questions=questions,
                sufficiency_score=sufficiency,
                **_labels_for(taxonomy, cause),
            ))

    ds = Dataset(tuple(records), taxonomy, LabelLevel.L3)
    logger.info(f"[DATASET] Dataset sintético: {len(ds)} registros, {len(classes)} causas, seed={seed}")
    return ds
