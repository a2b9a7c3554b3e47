# Suficiência de informação: níveis, contribuição das modalidades e importância de atributos
from .analysis import (
    ContributionReport,
    SufficiencyLevel,
    group_sufficiency,
    marginal_contribution,
    performance_by_sufficiency,
    permutation_importance,
    predict_sufficiency_pipeline,
    sufficiency_dataset,
)
from .shapley import shapley_importance, shapley_values, write_importance_report

__all__ = [
    "ContributionReport",
    "SufficiencyLevel",
    "group_sufficiency",
    "marginal_contribution",
    "performance_by_sufficiency",
    "permutation_importance",
    "predict_sufficiency_pipeline",
    "shapley_importance",
    "shapley_values",
    "sufficiency_dataset",
    "write_importance_report",
]
