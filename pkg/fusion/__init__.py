# Fusão multimodal
from .ensemble import (OofPrediction, StackedModel, StackingEnsemble, ablation_table, fuse_features,
                       generate_oof, soft_vote, stack_predict, stack_train)
from .manifest import EnsembleManifest

__all__ = [
    'OofPrediction', 'StackedModel', 'StackingEnsemble', 'ablation_table', 'fuse_features',
    'generate_oof', 'soft_vote', 'stack_predict', 'stack_train', 'EnsembleManifest',
]
