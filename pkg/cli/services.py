import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import jsonlines
import pandas as pd

from cli.config import SENSITIVITY_FRACTIONS
from cli.models import RunConfig
from core.dataset import (
    AgeGroup, CauseTaxonomy, Dataset, LabelLevel, collapse_probabilities, filter_records, load_dataset,
    load_taxonomy,
)
from core.errors import ConfigError, EmptyEnsembleError, VaForgeError
from core.features import FeatureMatrix, ProbMatrix, encode_questions, question_indicators
from core.splits import SplitPlan, stratified_split, subsample_training
from core.tabular_text import TemplateTable, build_fused_documents, load_template_table
from core.text_features import (
    PreprocessConfig, TextFeaturizer, is_invalid_narrative, load_text_artifact, save_text_artifact,
    top_ngrams_per_component,
)
from evaluation.metrics import (
    MetricReport, accuracy, bootstrap_metric, confusion, csmf, evaluate_predictions, true_csmf, write_confusion_csv,
    write_csmf_table, write_metric_report,
)
from evaluation.report import generate_report, load_report, render_markdown, save_report
from fusion.ensemble import StackingEnsemble, ablation_table, fuse_features, soft_vote
from fusion.manifest import EnsembleManifest
from hpo.search_space import load_search_space
from hpo.study import best_trial, cv_objective, run_study, write_study_log
from learners.base import FittedModel, LearnerKind, LearnerSpec, Modality, fit, predict_proba
from learners.learner_loader import load_model, save_model
from sufficiency.analysis import performance_by_sufficiency, predict_sufficiency_pipeline
from sufficiency.shapley import shapley_importance, write_importance_report

logger = logging.getLogger(__name__)

Features = Dict[str, FeatureMatrix]


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.-]+", "_", name)


class PipelineService:
    """Executa os comandos da CLI sobre uma RunConfig já validada."""

    def __init__(self, config: RunConfig, seed: Optional[int] = None, workers: int = 1,
                 out: Optional[str] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.workers = workers
        self.out = Path(out or config.output_dir)
        self._taxonomy: Optional[CauseTaxonomy] = None
        self._templates: Optional[TemplateTable] = None
        self._dataset: Optional[Dataset] = None
        self.featurizers: Dict[str, TextFeaturizer] = {}
        self.indicators: List[str] = []
        self.extras: Dict[str, Dict[str, Any]] = {}

    # ------------------------------------------------------------------ carga

    @property
    def taxonomy(self) -> CauseTaxonomy:
        if self._taxonomy is None:
            self._taxonomy = load_taxonomy(self.config.taxonomy)
        return self._taxonomy

    @property
    def templates(self) -> TemplateTable:
        if self._templates is None:
            self._templates = load_template_table(self.config.templates)
        return self._templates

    def _load(self, path: str) -> Dataset:
        return load_dataset(path, self.config.format, self.taxonomy, LabelLevel.parse(self.config.label_level))

    def _filter(self, ds: Dataset) -> Dataset:
        if self.config.adults_only:
            ds = filter_records(ds, lambda r: r.age_group is AgeGroup.ADULT)
        if self.config.drop_invalid_narratives:
            ds = filter_records(ds, lambda r: not is_invalid_narrative(r.narrative))
        return ds

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = self._filter(self._load(self.config.dataset))
        return self._dataset

    def prepare(self):
        """Carrega taxonomia, templates e dataset; erros aqui são de validação."""
        missing = self.config.check_paths()
        if missing:
            raise ConfigError(f"arquivos não encontrados: {missing}")
        _ = self.taxonomy, self.templates, self.dataset
        for level in self.config.report.levels:
            self.taxonomy.parent_map(self.config.label_level, level)
        return self

    def split(self) -> Tuple[Dataset, Dataset, SplitPlan]:
        ds = self.dataset
        if self.config.test_dataset:
            test = self._filter(self._load(self.config.test_dataset))
            train = ds.subset(ds.labeled_ids())
            plan = SplitPlan(tuple(train.ids), tuple(test.labeled_ids()), self.seed, 0.0)
            return train, test.subset(test.labeled_ids()), plan
        plan = stratified_split(ds, self.config.test_fraction, self.seed, allow_empty_classes=True)
        return ds.subset(plan.train_ids), ds.subset(plan.test_ids), plan

    # ------------------------------------------------------------- atributos

    def preprocess_config(self) -> PreprocessConfig:
        t = self.config.text
        return PreprocessConfig.default(
            lowercase=t.lowercase, strip_punctuation=t.strip_punctuation,
            remove_stopwords=t.remove_stopwords, lemmatize=t.lemmatize,
        )

    def _featurizer(self) -> TextFeaturizer:
        t = self.config.text
        return TextFeaturizer(self.preprocess_config(), ngram_range=t.ngram_range, min_df=t.min_df,
                              max_features=t.max_features, k=t.svd_k, seed=self.seed)

    def _text_block(self, key: str, train: Dataset, test: Optional[Dataset], texts) -> Tuple[FeatureMatrix, Optional[FeatureMatrix]]:
        featurizer = self._featurizer()
        train_block = featurizer.fit_transform(train.ids, texts(train))
        self.featurizers[key] = featurizer
        test_block = featurizer.transform(test.ids, texts(test)) if test is not None else None
        return train_block, test_block

    def build_features(self, train: Dataset, test: Optional[Dataset] = None,
                       modalities: Optional[Iterable[str]] = None) -> Tuple[Features, Features]:
        """Blocos de atributos por modalidade, com todo ajuste feito só no treino.

        O bloco ``questions`` é sempre gerado.
        """
        wanted = set(modalities or [])
        wanted.add(Modality.QUESTIONS.value)
        if Modality.FEATURE_FUSION.value in wanted:
            wanted.add(Modality.NARRATIVE.value)
        train_f: Features = {}
        test_f: Features = {}

        indicators = question_indicators(train.records)
        self.indicators = indicators
        train_f["questions"] = encode_questions(train.records, indicators)
        if test is not None:
            test_f["questions"] = encode_questions(test.records, indicators)

        if Modality.NARRATIVE.value in wanted:
            tr, te = self._text_block("narrative", train, test, lambda d: [r.narrative for r in d.records])
            train_f["narrative"] = tr
            if te is not None:
                test_f["narrative"] = te
        if Modality.FEATURE_FUSION.value in wanted:
            train_f["feature_fusion"] = fuse_features(train_f["narrative"], train_f["questions"])
            if test is not None:
                test_f["feature_fusion"] = fuse_features(test_f["narrative"], test_f["questions"])
        if Modality.FUSED_TEXT.value in wanted:
            def fused(d: Dataset) -> List[str]:
                docs = build_fused_documents(d.records, self.templates)
                return [docs[rid] for rid in d.ids]
            tr, te = self._text_block("fused_text", train, test, fused)
            train_f["fused_text"] = tr
            if te is not None:
                test_f["fused_text"] = te
        return train_f, test_f

    @staticmethod
    def _modalities(specs: Sequence[LearnerSpec]) -> List[str]:
        return sorted({s.modality.value for s in specs if not s.is_external})

    # -------------------------------------------------------------- comandos

    def validate(self) -> Dict[str, Any]:
        """Relatório de validação: esquema, cobertura da taxonomia e narrativas inválidas."""
        report: Dict[str, Any] = {"errors": [], "warnings": []}
        missing = self.config.check_paths()
        if missing:
            report["errors"] += [f"arquivo não encontrado: {p}" for p in missing]
            return report
        try:
            raw = self._load(self.config.dataset)
            _ = self.templates
        except VaForgeError as e:
            report["errors"] += [str(issue.to_dict()) for issue in e.issues] or [str(e)]
            return report

        level = raw.label_level
        labels = [r.label(level) for r in raw.records]
        counts = pd.Series([lab for lab in labels if lab is not None], dtype=object).value_counts()
        invalid = [r.id for r in raw.records if is_invalid_narrative(r.narrative)]
        indicators = question_indicators(raw.records)
        untemplated = sorted(set(indicators) - set(self.templates.templates))

        report.update({
            "n_records": len(raw),
            "label_level": level.value,
            "unlabeled": sum(1 for lab in labels if lab is None),
            "class_counts": {c: int(counts.get(c, 0)) for c in raw.classes},
            "empty_classes": [c for c in raw.classes if not counts.get(c, 0)],
            "invalid_narratives": invalid,
            "n_indicators": len(indicators),
            "untemplated_indicators": untemplated,
            "learners": [s.name for s in self.config.learner_specs()],
        })
        if invalid:
            report["warnings"].append(f"{len(invalid)} narrativas inválidas")
        if untemplated:
            report["warnings"].append(f"{len(untemplated)} indicadores sem template serão ignorados no texto fundido")
        if report["empty_classes"]:
            report["warnings"].append(f"classes sem registros: {report['empty_classes']}")
        logger.info(f"[CLI] Validação: {len(raw)} registros, {len(invalid)} narrativas inválidas")
        return report

    def prep(self) -> Dict[str, str]:
        """Escreve os documentos fundidos e os artefatos de texto ajustados no treino."""
        train, test, plan = self.split()
        docs = build_fused_documents(self.dataset.records, self.templates)
        self.out.mkdir(parents=True, exist_ok=True)
        docs_path = self.out / "fused_documents.jsonl"
        with jsonlines.open(docs_path, mode="w") as writer:
            for rid in self.dataset.ids:
                writer.write({"id": rid, "text": docs[rid]})
        self.build_features(train, test, ["narrative", "fused_text"])
        written = {"fused_documents": str(docs_path), "split": str(self._write_json("split.json", plan.to_dict()))}
        written.update(self._save_artifacts())
        return written

    def _save_artifacts(self) -> Dict[str, str]:
        """Artefatos de texto, n-gramas de maior carga por componente e a lista de indicadores."""
        written = {"indicators": str(self._write_json("artifacts/indicators.json", self.indicators))}
        for key, featurizer in self.featurizers.items():
            written[key] = str(save_text_artifact(featurizer, self.out / "artifacts" / f"text_{key}.json"))
            top = top_ngrams_per_component(featurizer.tfidf, featurizer.svd, self.config.report.top_ngrams)
            written[f"top_ngrams_{key}"] = str(self._write_json(f"artifacts/top_ngrams_{key}.json", top))
        return written

    def _write_json(self, name: str, data: Any) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
            f.write("\n")
        return path

    def _write_outputs(self, name: str, probs: ProbMatrix, truth: Sequence[str]) -> MetricReport:
        report = evaluate_predictions(truth, probs)
        base = self.out / "models" / _safe_name(name)
        probs.write_csv(base / "probabilities.csv")
        write_metric_report(report, base / "metrics.json")
        write_confusion_csv(confusion(truth, probs.argmax_labels(), probs.classes), base / "confusion.csv")
        write_csmf_table(true_csmf(truth, probs.classes), csmf(probs), base / "csmf.csv")

        settings = self.config.report
        extra: Dict[str, Any] = {}
        if settings.bootstrap:
            extra["accuracy_interval"] = bootstrap_metric(truth, probs.argmax_labels(), accuracy,
                                                          n=settings.bootstrap, seed=self.seed, alpha=settings.alpha)
        for level in settings.levels:
            parents = self.taxonomy.parent_map(self.config.label_level, level)
            collapsed = collapse_probabilities(probs, self.taxonomy, self.config.label_level, level)
            coarse = evaluate_predictions([parents[t] for t in truth], collapsed)
            write_metric_report(coarse, base / f"metrics_{level}.json")
            extra.setdefault("levels", {})[level] = {k: round(v, 4) for k, v in coarse.summary().items()}
        if extra:
            self.extras[name] = extra
        return report

    def _fit_predict(self, spec: LearnerSpec, train: Dataset, test: Dataset,
                     train_f: Features, test_f: Features) -> Tuple[FittedModel, ProbMatrix]:
        key = spec.modality.value
        X_train = train_f.get(key, FeatureMatrix.empty(train.ids)) if not spec.is_external else FeatureMatrix.empty(train.ids)
        X_test = test_f.get(key, FeatureMatrix.empty(test.ids)) if not spec.is_external else FeatureMatrix.empty(test.ids)
        model = fit(spec, X_train, train.labels(train.ids), classes=train.classes)
        return model, predict_proba(model, X_test)

    def _ensemble_specs(self, specs: Sequence[LearnerSpec]) -> List[LearnerSpec]:
        sources = self.config.ensemble.sources
        if not sources:
            return list(specs)
        by_name = {s.name: s for s in specs}
        unknown = [n for n in sources if n not in by_name]
        if unknown:
            raise ConfigError(f"fontes de ensemble desconhecidas: {unknown}")
        return [by_name[n] for n in sources]

    def _meta_spec(self) -> LearnerSpec:
        meta = self.config.ensemble.meta
        return meta.to_spec() if meta else LearnerSpec(kind=LearnerKind.LOGREG, name="meta:logreg", seed=self.seed)

    def run(self, ensemble_only: bool = False, specs: Optional[Sequence[LearnerSpec]] = None) -> Dict[str, Any]:
        """Treina no treino completo, avalia no hold-out e aplica a estratégia de fusão configurada."""
        specs = list(specs) if specs is not None else self.config.learner_specs()
        if not specs:
            raise ConfigError("nenhum learner configurado")
        strategy = self.config.ensemble.strategy
        if ensemble_only and strategy not in ("soft_vote", "stacking"):
            raise ConfigError(f"'ensemble' exige estratégia soft_vote ou stacking, configurada: {strategy}")

        train, test, plan = self.split()
        meta_spec = self._meta_spec() if strategy == "stacking" else None
        wanted = self._modalities(specs + ([meta_spec] if meta_spec else []))
        train_f, test_f = self.build_features(train, test, wanted)
        truth = test.labels(test.ids)

        reports: Dict[str, MetricReport] = {}
        probs: Dict[str, ProbMatrix] = {}
        members = self._ensemble_specs(specs)
        to_run = members if ensemble_only else specs
        for spec in to_run:
            model, pm = self._fit_predict(spec, train, test, train_f, test_f)
            probs[spec.name] = pm
            if not ensemble_only:
                reports[spec.name] = self._write_outputs(spec.name, pm, truth)
                if not spec.is_external:
                    save_model(model, self.out / "models" / _safe_name(spec.name) / "model.json")

        if strategy == "soft_vote":
            if len(members) < 2:
                raise EmptyEnsembleError("voto suave exige >= 2 fontes")
            voted, _ = soft_vote([probs[s.name] for s in members])
            reports["soft_vote"] = self._write_outputs("soft_vote", voted, truth)
        elif strategy == "stacking":
            stacking = StackingEnsemble(members, meta_spec, self.config.ensemble.k, self.seed, self.workers)
            stacked, _ = stacking.fit(train, train_f).predict(test_f)
            reports["stacking"] = self._write_outputs("stacking", stacked, truth)

        notes = {"strategy": strategy, "seed": self.seed, "n_train": len(train), "n_test": len(test),
                 "label_level": train.label_level.value}
        report = generate_report(reports, notes=notes)
        if self.extras:
            report["extras"] = {name: self.extras[name] for name in reports if name in self.extras}
        save_report(report, self.out)
        self._write_json("split.json", plan.to_dict())
        self._save_artifacts()
        self.manifest(specs, meta_spec).save(self.out / "manifest.json")
        return report

    def manifest(self, specs: Sequence[LearnerSpec], meta_spec: Optional[LearnerSpec]) -> EnsembleManifest:
        return EnsembleManifest(
            strategy=self.config.ensemble.strategy,
            label_level=LabelLevel.parse(self.config.label_level).value,
            seed=self.seed,
            test_fraction=self.config.test_fraction,
            k=self.config.ensemble.k,
            base_specs=list(specs),
            meta_spec=meta_spec,
            sources=list(self.config.ensemble.sources),
            dataset=self.config.dataset,
            format=self.config.format,
            test_dataset=self.config.test_dataset,
            taxonomy=self.config.taxonomy,
            templates=self.config.templates,
            adults_only=self.config.adults_only,
            drop_invalid_narratives=self.config.drop_invalid_narratives,
            text=self.config.text.model_dump(mode="json"),
            static_sources=[s.name for s in specs if s.is_external],
        )

    @classmethod
    def from_manifest(cls, manifest: EnsembleManifest, config: RunConfig, workers: int = 1,
                      out: Optional[str] = None) -> "PipelineService":
        """Reconstrói a execução gravada no manifesto.

        Da configuração corrente só são usados o diretório de saída e as
        seções que a repetição não executa (estudo e suficiência).
        """
        ensemble = {**config.ensemble.model_dump(mode="json"), "strategy": manifest.strategy, "k": manifest.k,
                    "sources": manifest.sources,
                    "meta": manifest.meta_spec.model_dump(mode="json") if manifest.meta_spec else None}
        replay = RunConfig.model_validate({
            **config.model_dump(mode="json"),
            "learners": [s.model_dump(mode="json") for s in manifest.base_specs],
            "ensemble": ensemble,
            "text": manifest.text,
            "label_level": manifest.label_level,
            "test_fraction": manifest.test_fraction,
            "dataset": manifest.dataset or config.dataset,
            "format": manifest.format,
            "test_dataset": manifest.test_dataset,
            "taxonomy": manifest.taxonomy or config.taxonomy,
            "templates": manifest.templates or config.templates,
            "adults_only": manifest.adults_only,
            "drop_invalid_narratives": manifest.drop_invalid_narratives,
        })
        return cls(replay, seed=manifest.seed, workers=workers, out=out)

    def _stored_features(self, ds: Dataset, modality: str) -> FeatureMatrix:
        artifacts = self.out / "artifacts"
        indicators_path = artifacts / "indicators.json"
        if not indicators_path.exists():
            raise ConfigError(f"artefatos ausentes em {artifacts}; rode 'run' antes de 'predict'")
        with open(indicators_path, "r", encoding="utf-8") as f:
            questions = encode_questions(ds.records, json.load(f))
        if modality == Modality.QUESTIONS.value:
            return questions

        def text(key: str, texts: List[str]) -> FeatureMatrix:
            path = artifacts / f"text_{key}.json"
            if not path.exists():
                raise ConfigError(f"artefato de texto ausente: {path}")
            return load_text_artifact(path).transform(ds.ids, texts)

        if modality == Modality.FUSED_TEXT.value:
            docs = build_fused_documents(ds.records, self.templates)
            return text("fused_text", [docs[rid] for rid in ds.ids])
        narrative = text("narrative", [r.narrative for r in ds.records])
        if modality == Modality.FEATURE_FUSION.value:
            return fuse_features(narrative, questions)
        return narrative

    def predict(self, model_name: str, input_path: str) -> Path:
        """Aplica um modelo salvo por ``run`` a outro arquivo de registros, com os artefatos do mesmo run."""
        model_path = self.out / "models" / _safe_name(model_name) / "model.json"
        if not model_path.exists():
            raise ConfigError(f"modelo '{model_name}' não encontrado em {model_path}")
        model = load_model(model_path)
        ds = self._load(input_path)
        probs = predict_proba(model, self._stored_features(ds, model.spec.modality.value))
        path = probs.write_csv(self.out / "predictions" / f"{_safe_name(model_name)}.csv")
        logger.info(f"[CLI] Predições de {model_name} para {len(ds)} registros em {path}")
        return path

    def hpo(self) -> Dict[str, Any]:
        """Busca de hiperparâmetros com validação cruzada no treino."""
        settings = self.config.study
        specs = [s for s in self.config.learner_specs() if not s.is_external]
        if not specs:
            raise ConfigError("hpo exige ao menos um learner treinável")
        if settings.learner:
            specs = [s for s in specs if s.name == settings.learner]
            if not specs:
                raise ConfigError(f"learner '{settings.learner}' não encontrado")
        spec = specs[0]
        space = load_search_space(settings.space if settings.space else (settings.preset or spec.kind.value))

        train, _, _ = self.split()
        train_f, _ = self.build_features(train, None, [spec.modality.value])
        objective = cv_objective(spec, train, train_f[spec.modality.value], settings.k, self.seed,
                                 n_jobs=self.workers)
        best, trials = run_study(objective, space, settings.to_study(self.seed))

        write_study_log(trials, self.out / "hpo" / "study_log.jsonl")
        best_record = best_trial(trials, settings.direction)
        result = {"learner": spec.name, "hyperparams": best, "score": best_record.final_score,
                  "trial_id": best_record.trial_id, "n_trials": len(trials),
                  "states": {s: sum(1 for t in trials if t.state.value == s) for s in ("complete", "pruned", "failed")}}
        self._write_json("hpo/best_config.json", result)
        return result

    def sensitivity(self, fractions: Sequence[float] = SENSITIVITY_FRACTIONS) -> pd.DataFrame:
        """Curva de aprendizado: frações do treino contra o mesmo hold-out."""
        train, test, _ = self.split()
        truth = test.labels(test.ids)
        rows = []
        for spec in self.config.learner_specs():
            if spec.is_external:
                logger.warning(f"[CLI] {spec.name}: fonte externa fora da análise de sensibilidade")
                continue
            for fraction in fractions:
                sub = subsample_training(train, fraction, self.seed, allow_empty_classes=True)
                train_f, test_f = self.build_features(sub, test, [spec.modality.value])
                _, pm = self._fit_predict(spec, sub, test, train_f, test_f)
                report = evaluate_predictions(truth, pm)
                rows.append({
                    "learner": spec.name, "fraction": float(fraction), "n_train": len(sub),
                    "n_test": len(test), "accuracy": report.accuracy, "weighted_f1": report.weighted["f1"],
                    "csmf_accuracy": report.csmf_accuracy,
                })
        frame = pd.DataFrame(rows)
        path = self.out / "sensitivity.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        logger.info(f"[CLI] Sensibilidade: {len(rows)} linhas em {path}")
        return frame

    def ablation(self) -> pd.DataFrame:
        """Voto suave deixando uma fonte de fora (e por grupo de modalidade)."""
        specs = self._ensemble_specs(self.config.learner_specs())
        if len(specs) < 2:
            raise EmptyEnsembleError("ablação exige >= 2 fontes")
        train, test, _ = self.split()
        train_f, test_f = self.build_features(train, test, self._modalities(specs))
        sources = {s.name: self._fit_predict(s, train, test, train_f, test_f)[1] for s in specs}
        truth = dict(zip(test.ids, test.labels(test.ids)))
        table = ablation_table(sources, truth, self.config.ensemble.groups)
        path = self.out / "ablation.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        (self.out / "ablation.md").write_text(table.to_markdown(index=False, floatfmt=".4f") + "\n", encoding="utf-8")
        return table

    def sufficiency(self) -> Dict[str, Any]:
        """Predição do nível de suficiência, contribuição das modalidades e importância de atributos."""
        settings = self.config.sufficiency
        learner = settings.learner.to_spec() if settings.learner else None
        text = self.config.text
        result = predict_sufficiency_pipeline(
            self.dataset, self.preprocess_config(), svd_k=settings.svd_k, learner=learner,
            test_fraction=settings.test_fraction, seed=self.seed,
            ngram_range=text.ngram_range, min_df=text.min_df, max_features=text.max_features,
            learners={name: c.to_spec() for name, c in settings.learners.items()},
        )
        out = result.to_dict()

        model = result.models["feature_fusion"]
        X_test = result.test_features["feature_fusion"]
        X_test = X_test.select(X_test.ids[:settings.shapley_rows])
        importance = shapley_importance(model, X_test, n_samples=settings.shapley_samples, seed=self.seed,
                                        n_jobs=self.workers, train=result.train_features["feature_fusion"])
        write_importance_report(importance, self.out / "sufficiency" / "importance.csv", top=settings.top)
        out["top_features"] = importance.head(settings.top)["feature"].tolist()

        specs = [s for s in self.config.learner_specs() if not s.is_external]
        if specs:
            train, test, _ = self.split()
            train_f, test_f = self.build_features(train, test, [specs[0].modality.value])
            _, pm = self._fit_predict(specs[0], train, test, train_f, test_f)
            scores = [test.get(rid).sufficiency_score for rid in test.ids]
            table = performance_by_sufficiency(test.labels(test.ids), pm.argmax_labels(), scores, test.classes)
            table.to_csv(self.out / "sufficiency" / "cod_by_sufficiency.csv", index=False,
                         float_format="%.6f", lineterminator="\n")
            out["cod_by_sufficiency"] = table.to_dict(orient="records")

        self._write_json("sufficiency/report.json", out)
        return out

    def report(self, path: Optional[str] = None) -> str:
        """Resumo em markdown a partir de um JSON de métricas ou relatório."""
        source = Path(path) if path else self.out / "report.json"
        markdown = render_markdown(load_report(source))
        (self.out / "report.md").parent.mkdir(parents=True, exist_ok=True)
        (self.out / "report.md").write_text(markdown + "\n", encoding="utf-8")
        return markdown
