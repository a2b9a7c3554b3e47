# Dados, atributos de texto e documentos fundidos
from .dataset import CauseTaxonomy, Dataset, LabelLevel, Response, VARecord, load_dataset, load_taxonomy
from .features import FeatureMatrix, ProbMatrix, encode_questions
from .splits import SplitPlan, stratified_kfold, stratified_split, subsample_training

__all__ = [
    'CauseTaxonomy', 'Dataset', 'LabelLevel', 'Response', 'VARecord', 'load_dataset', 'load_taxonomy',
    'FeatureMatrix', 'ProbMatrix', 'encode_questions',
    'SplitPlan', 'stratified_kfold', 'stratified_split', 'subsample_training',
]
