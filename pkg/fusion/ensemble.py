"""
Estratégias de fusão multimodal:

- nível de atributos: concatenação de blocos (texto + tabular);
- nível de decisão: voto suave (média das probabilidades) e stacking
  (super learner treinado sobre predições fora do fold).

A fusão no nível dos dados é composta em outro lugar (documentos fundidos
do core.tabular_text passando pelo core.text_features).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from core.dataset import Dataset
from core.errors import AlignmentError, ConfigError, DimensionError, EmptyEnsembleError, FoldError
from core.features import FeatureMatrix, ProbMatrix
from core.splits import Fold, stratified_kfold
from evaluation.metrics import evaluate_predictions
from learners.base import FittedModel, LearnerKind, LearnerSpec, fit, predict_proba
from learners.external import load_external_predictions

logger = logging.getLogger(__name__)

META_KINDS = (LearnerKind.KNN, LearnerKind.LOGREG, LearnerKind.GBDT, LearnerKind.MLP)
STATIC_ADAPTER = "static-adapter"

FeatureSet = Mapping[str, FeatureMatrix]


def fuse_features(text_feats: FeatureMatrix, tab_feats: FeatureMatrix) -> FeatureMatrix:
    """Concatena colunas, texto primeiro, com os prefixos ``text:`` e ``tab:`` em todos os nomes."""
    if set(text_feats.ids) != set(tab_feats.ids) or text_feats.n_rows != tab_feats.n_rows:
        raise AlignmentError("blocos de texto e tabular com ids diferentes")
    tab_feats = tab_feats.select(text_feats.ids)

    text_cols = tuple(f"text:{c}" for c in text_feats.columns)
    tab_cols = tuple(f"tab:{c}" for c in tab_feats.columns)
    values = np.hstack([text_feats.values, tab_feats.values])
    return FeatureMatrix(text_feats.ids, text_cols + tab_cols, values)


def _align(mats: Sequence[ProbMatrix]) -> List[ProbMatrix]:
    if not mats:
        raise EmptyEnsembleError("ensemble sem matrizes de probabilidade")
    ref = mats[0]
    aligned = []
    for i, pm in enumerate(mats):
        if set(pm.ids) != set(ref.ids) or pm.n_rows != ref.n_rows:
            raise AlignmentError(f"matriz {i} cobre ids diferentes da matriz 0")
        aligned.append(pm.reorder_classes(ref.classes).select(ref.ids))
    return aligned


def soft_vote(mats: Sequence[ProbMatrix]) -> Tuple[ProbMatrix, List[str]]:
    """Média aritmética das probabilidades; rótulo = argmax (empate: menor índice de classe)."""
    aligned = _align(mats)
    stack = np.stack([pm.values for pm in aligned])
    # soma em ordem canônica: o resultado não depende da ordem da lista
    mean = np.sort(stack, axis=0).sum(axis=0) / len(aligned)
    voted = ProbMatrix(aligned[0].ids, aligned[0].classes, mean)
    logger.info(f"[ENSEMBLE] Voto suave de {len(aligned)} fontes sobre {voted.n_rows} registros")
    return voted, voted.argmax_labels()


@dataclass(frozen=True, eq=False)
class OofPrediction:
    model_name: str
    probs: ProbMatrix
    fold_of: Dict[str, int]
    static: bool = False

    @property
    def ids(self) -> Tuple[str, ...]:
        return self.probs.ids


def _fit_predict_fold(spec: LearnerSpec, X: FeatureMatrix, ds: Dataset, fold: Fold, fold_index: int) -> ProbMatrix:
    fold_spec = spec.model_copy(update={"seed": spec.seed + fold_index})
    model = fit(fold_spec, X.select(fold.train_ids), ds.labels(fold.train_ids), classes=ds.classes)
    return predict_proba(model, X.select(fold.val_ids))


def _check_folds(folds: Sequence[Fold]):
    for i, fold in enumerate(folds):
        if set(fold.train_ids) & set(fold.val_ids):
            raise FoldError(f"fold {i}: ids de validação presentes no treino")


def generate_oof(spec: LearnerSpec, ds: Dataset, features: FeatureSet, k: int = 5, seed: int = 42,
                 n_jobs: int = 1, folds: Optional[Sequence[Fold]] = None) -> OofPrediction:
    """Predições fora do fold: o modelo do fold i nunca viu os registros do fold i.

    Fontes externas não são retreinadas; a mesma matriz é fatiada em todos os
    folds e o resultado sai marcado como ``static``.
    """
    folds = list(folds) if folds is not None else stratified_kfold(ds, k, seed)
    _check_folds(folds)
    fold_of = {rid: i for i, fold in enumerate(folds) for rid in fold.val_ids}
    ordered = [rid for rid in ds.ids if rid in fold_of]

    if spec.is_external:
        loaded = load_external_predictions(spec.resolved["path"], ds.classes)
        logger.warning(f"[STACKING] {spec.name}: fonte externa usada como {STATIC_ADAPTER} (sem OOF real)")
        return OofPrediction(spec.name, loaded.select(ordered), fold_of, static=True)

    X = features[spec.modality.value]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_fit_predict_fold)(spec, X, ds, fold, i) for i, fold in enumerate(folds)
    )
    values = {}
    for pm in parts:
        for rid, row in zip(pm.ids, pm.values):
            values[rid] = row
    probs = ProbMatrix(tuple(ordered), tuple(ds.classes), np.vstack([values[rid] for rid in ordered]))
    logger.info(f"[STACKING] OOF de {spec.name}: {probs.n_rows} registros em {len(folds)} folds")
    return OofPrediction(spec.name, probs, fold_of)


@dataclass(frozen=True, eq=False)
class StackedModel:
    base_names: Tuple[str, ...]
    meta: FittedModel
    base_classes: Tuple[Tuple[str, ...], ...]
    base_specs: Tuple[LearnerSpec, ...] = field(default=())
    static_sources: Tuple[str, ...] = field(default=())


def _meta_features(names: Sequence[str], mats: Sequence[ProbMatrix]) -> FeatureMatrix:
    columns = [f"{name}:{c}" for name, pm in zip(names, mats) for c in pm.classes]
    return FeatureMatrix(mats[0].ids, tuple(columns), np.hstack([pm.values for pm in mats]))


def stack_train(oofs: Sequence[OofPrediction], y: Sequence[str], meta_spec: LearnerSpec,
                base_specs: Optional[Sequence[LearnerSpec]] = None,
                classes: Optional[Sequence[str]] = None) -> StackedModel:
    """Meta-learner sobre as probabilidades OOF concatenadas (na ordem de ``oofs``).

    ``y`` acompanha a ordem de ids do primeiro OofPrediction.
    """
    if not oofs:
        raise EmptyEnsembleError("stacking sem modelos base")
    if meta_spec.kind not in META_KINDS:
        raise ConfigError(f"meta-learner deve ser um de {[k.value for k in META_KINDS]}")
    mats = [o.probs for o in oofs]
    ref_ids = mats[0].ids
    for o in oofs[1:]:
        if set(o.ids) != set(ref_ids):
            raise AlignmentError(f"OOF de {o.model_name} cobre ids diferentes de {oofs[0].model_name}")
    mats = [pm.select(ref_ids) for pm in mats]
    y = list(y)
    if len(y) != len(ref_ids):
        raise AlignmentError(f"{len(y)} rótulos para {len(ref_ids)} predições OOF")

    names = [o.model_name for o in oofs]
    if base_specs is not None and [s.name for s in base_specs] != names:
        raise AlignmentError("base_specs fora da ordem dos OOF")

    X_meta = _meta_features(names, mats)
    meta = fit(meta_spec, X_meta, y, classes=classes)
    statics = tuple(o.model_name for o in oofs if o.static)
    logger.info(f"[STACKING] Meta-learner {meta_spec.kind.value} sobre {X_meta.n_cols} colunas de {len(oofs)} modelos")
    return StackedModel(tuple(names), meta, tuple(pm.classes for pm in mats), tuple(base_specs or ()), statics)


def stack_predict_probs(stacked: StackedModel, base_probs: Sequence[ProbMatrix],
                        names: Optional[Sequence[str]] = None) -> Tuple[ProbMatrix, List[str]]:
    names = list(names) if names is not None else list(stacked.base_names)
    if len(base_probs) != len(stacked.base_names):
        raise DimensionError(f"esperadas {len(stacked.base_names)} fontes base, recebidas {len(base_probs)}")
    ids = base_probs[0].ids
    mats = []
    for pm, classes in zip(base_probs, stacked.base_classes):
        if set(pm.classes) != set(classes):
            raise DimensionError("classes da fonte base diferentes das usadas no treino do stacking")
        mats.append(pm.reorder_classes(classes).select(ids))
    # colunas nomeadas: base fora de ordem falha no predict do meta-learner
    final = predict_proba(stacked.meta, _meta_features(names, mats))
    return final, final.argmax_labels()


def stack_predict(stacked: StackedModel, base_models: Sequence[FittedModel],
                  X_test: FeatureSet) -> Tuple[ProbMatrix, List[str]]:
    """Predição final: modelos base (retreinados no treino completo) → meta-learner."""
    base_probs = []
    for model in base_models:
        if model.spec.is_external:
            ids = next(iter(X_test.values())).ids
            base_probs.append(load_external_predictions(model.params["path"], model.class_list).select(ids))
        else:
            base_probs.append(predict_proba(model, X_test[model.spec.modality.value]))
    return stack_predict_probs(stacked, base_probs, [m.spec.name for m in base_models])


class StackingEnsemble:
    """
    Super learner: OOF dos modelos base → meta-learner; depois os modelos base
    são retreinados no treino completo para gerar as entradas do teste.
    """

    def __init__(self, base_specs: Sequence[LearnerSpec], meta_spec: LearnerSpec,
                 k: int = 5, seed: int = 42, n_jobs: int = 1):
        if not base_specs:
            raise EmptyEnsembleError("stacking sem modelos base")
        self.base_specs = list(base_specs)
        self.meta_spec = meta_spec
        self.k = k
        self.seed = seed
        self.n_jobs = n_jobs
        self.oofs: List[OofPrediction] = []
        self.base_models: List[FittedModel] = []
        self.stacked: Optional[StackedModel] = None

    def fit(self, ds: Dataset, features: FeatureSet) -> "StackingEnsemble":
        folds = stratified_kfold(ds, self.k, self.seed)
        self.oofs = [generate_oof(s, ds, features, self.k, self.seed, self.n_jobs, folds) for s in self.base_specs]
        ids = self.oofs[0].ids
        self.stacked = stack_train(self.oofs, ds.labels(ids), self.meta_spec, self.base_specs, ds.classes)
        self.base_models = Parallel(n_jobs=self.n_jobs)(
            delayed(_fit_full)(s, ds, features) for s in self.base_specs
        )
        return self

    def predict(self, features: FeatureSet) -> Tuple[ProbMatrix, List[str]]:
        if self.stacked is None:
            raise ConfigError("StackingEnsemble não ajustado")
        return stack_predict(self.stacked, self.base_models, features)


def _fit_full(spec: LearnerSpec, ds: Dataset, features: FeatureSet) -> FittedModel:
    ids = ds.labeled_ids()
    X = features.get(spec.modality.value) if features else None
    X = X.select(ids) if X is not None else FeatureMatrix.empty(ids)
    return fit(spec, X, ds.labels(ids), classes=ds.classes)


def _metric_row(label: str, voted: ProbMatrix, truth: Mapping[str, str]) -> dict:
    report = evaluate_predictions([truth[rid] for rid in voted.ids], voted)
    return {
        "ensemble": label,
        "accuracy": report.accuracy,
        "weighted_f1": report.weighted["f1"],
        "weighted_precision": report.weighted["precision"],
        "weighted_recall": report.weighted["recall"],
        "csmf_accuracy": report.csmf_accuracy,
        "cccsmf_accuracy": report.cccsmf_accuracy,
    }


def ablation_table(sources: Mapping[str, ProbMatrix], truth: Mapping[str, str],
                   groups: Optional[Mapping[str, Sequence[str]]] = None) -> pd.DataFrame:
    """Voto suave com todas as fontes, por grupo de modalidade e deixando uma fonte de fora.

    Colunas de variação comparam acurácia e CSMF accuracy com a linha de todas as fontes.
    """
    if len(sources) < 2:
        raise EmptyEnsembleError(f"ablação exige >= 2 fontes, recebeu {len(sources)}")
    names = list(sources)
    subsets: List[Tuple[str, List[str]]] = [("All models (base)", names)]
    for group, members in (groups or {}).items():
        unknown = [m for m in members if m not in sources]
        if unknown:
            raise AlignmentError(f"grupo '{group}' com fontes desconhecidas: {unknown}")
        subsets.append((f"All {group}", list(members)))
    subsets.extend((f"All but {name}", [n for n in names if n != name]) for name in names)

    rows = []
    for label, members in subsets:
        voted, _ = soft_vote([sources[m] for m in members])
        rows.append(_metric_row(label, voted, truth))
        logger.debug(f"[ENSEMBLE] {label}: acc={rows[-1]['accuracy']:.3f}")

    table = pd.DataFrame(rows)
    table["delta_accuracy"] = table["accuracy"] - table.loc[0, "accuracy"]
    table["delta_csmf_accuracy"] = table["csmf_accuracy"] - table.loc[0, "csmf_accuracy"]
    logger.info(f"[ENSEMBLE] Tabela de ablação com {len(table)} linhas")
    return table
