# Classificadores base
from .base import FittedModel, LearnerKind, LearnerSpec, Modality, fit, fit_gbdt, predict_proba, validate_spec
from .external import load_external_predictions
from .learner_loader import load_model, save_model

__all__ = [
    'FittedModel', 'LearnerKind', 'LearnerSpec', 'Modality', 'fit', 'fit_gbdt', 'predict_proba', 'validate_spec',
    'load_external_predictions', 'load_model', 'save_model',
]
