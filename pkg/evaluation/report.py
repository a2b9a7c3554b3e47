"""
Relatórios de avaliação: JSON completo, CSV resumido e resumo em markdown.

Os arquivos não levam timestamp no nome nem no conteúdo, para que duas
execuções com as mesmas entradas gerem saídas idênticas.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import pandas as pd

from core.errors import SchemaError
from evaluation.metrics import MetricReport

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "accuracy", "weighted_f1", "weighted_precision", "weighted_recall",
    "macro_f1", "csmf_accuracy", "cccsmf_accuracy",
]


def generate_report(reports: Mapping[str, MetricReport], ablation: Optional[pd.DataFrame] = None,
                    notes: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Junta os MetricReport de cada modelo/estratégia em um único relatório."""
    if not reports:
        return {"error": "Nenhum resultado disponível"}

    summary = {name: {k: round(v, 4) for k, v in r.summary().items()} for name, r in reports.items()}
    best = max(summary, key=lambda name: (summary[name]["accuracy"], summary[name]["csmf_accuracy"]))
    report = {
        "summary": summary,
        "best_model": best,
        "per_class": {
            name: [
                {"cause": m.label, "precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                for m in r.per_class
            ]
            for name, r in reports.items()
        },
        "csmf": {name: {"true": r.csmf_true, "pred": r.csmf_pred} for name, r in reports.items()},
        "notes": dict(notes or {}),
    }
    if ablation is not None:
        report["ablation"] = ablation.to_dict(orient="records")
    return report


def summary_frame(report: Dict[str, Any]) -> pd.DataFrame:
    if "summary" not in report:
        raise SchemaError("relatório sem seção 'summary'")
    frame = pd.DataFrame.from_dict(report["summary"], orient="index")
    columns = [c for c in SUMMARY_COLUMNS if c in frame.columns]
    frame = frame[columns]
    frame.index.name = "model"
    return frame


def render_markdown(report: Dict[str, Any]) -> str:
    lines = ["# Relatório de avaliação", ""]
    frame = summary_frame(report)
    lines += ["## Métricas", "", frame.to_markdown(floatfmt=".4f"), ""]
    if report.get("best_model"):
        lines += [f"Melhor modelo por acurácia: **{report['best_model']}**", ""]
    extras = report.get("extras") or {}
    intervals = {name: e["accuracy_interval"] for name, e in extras.items() if "accuracy_interval" in e}
    if intervals:
        frame = pd.DataFrame.from_dict(intervals, orient="index")[["point", "lower", "upper"]]
        lines += ["## Intervalo de acurácia (bootstrap)", "", frame.to_markdown(floatfmt=".4f"), ""]
    levels = [{"model": name, "level": level, **summary}
              for name, e in extras.items() for level, summary in e.get("levels", {}).items()]
    if levels:
        frame = pd.DataFrame(levels)[["model", "level", "accuracy", "weighted_f1", "csmf_accuracy"]]
        lines += ["## Níveis agregados", "", frame.to_markdown(index=False, floatfmt=".4f"), ""]
    if report.get("ablation"):
        ablation = pd.DataFrame(report["ablation"]).set_index("ensemble")
        lines += ["## Ablação", "", ablation.to_markdown(floatfmt=".4f"), ""]
    for name, rows in report.get("per_class", {}).items():
        if rows:
            lines += [f"## Por classe: {name}", "",
                      pd.DataFrame(rows).to_markdown(index=False, floatfmt=".3f"), ""]
    return "\n".join(lines)


def save_report(report: Dict[str, Any], output_dir: Union[str, Path] = "results") -> Path:
    """Salva relatório em múltiplos formatos: report.json, summary.csv e report.md."""
    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)

    json_file = output_path / "report.json"
    with open(json_file, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, ensure_ascii=False, sort_keys=True, default=str)

    summary_frame(report).to_csv(output_path / "summary.csv", float_format="%.6f", lineterminator="\n")
    (output_path / "report.md").write_text(render_markdown(report) + "\n", encoding="utf-8")

    logger.info(f"[METRICS] Relatório salvo em: {output_path}")
    return json_file


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    """Aceita o JSON de ``save_report`` ou um MetricReport isolado (``write_metric_report``)."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if "summary" in data and isinstance(data["summary"], dict) and "accuracy" in data["summary"]:
        # MetricReport isolado: o nome do modelo vira o nome do arquivo
        data = {"summary": {Path(path).stem: data["summary"]}, "per_class": {}}
    if "summary" not in data:
        raise SchemaError(f"{path}: JSON sem seção 'summary'")
    return data
