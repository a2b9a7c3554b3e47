import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import optuna

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cli.config import (  # noqa: E402
    CLI_DESCRIPTION, CLI_NAME, CLI_VERSION, CONFIG_ENV_VAR, EXIT_OK, EXIT_RUNTIME_ERROR,
    EXIT_VALIDATION_ERROR, LOG_FORMAT, LOG_LEVEL, SENSITIVITY_FRACTIONS,
)
from cli.models import load_run_config  # noqa: E402
from cli.services import PipelineService  # noqa: E402
from core.errors import ConfigError, VaForgeError  # noqa: E402
from fusion.manifest import EnsembleManifest  # noqa: E402

logger = logging.getLogger(__name__)


def setup_logging(level: str = LOG_LEVEL):
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger("joblib").setLevel(logging.WARNING)
    optuna.logging.set_verbosity(optuna.logging.WARNING)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=CLI_NAME, description=CLI_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"{CLI_NAME} {CLI_VERSION}")
    parser.add_argument("--config", help=f"Arquivo JSON de configuração (padrão: ${CONFIG_ENV_VAR})")
    parser.add_argument("--seed", type=int, default=None, help="Sobrepõe a seed da configuração")
    parser.add_argument("--workers", type=int, default=1, help="Jobs paralelos (folds, trials, Shapley)")
    parser.add_argument("--out", default=None, help="Diretório de saída (sobrepõe output_dir)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", help="Valida configuração, esquema e narrativas")
    sub.add_parser("prep", help="Gera documentos fundidos e artefatos de texto")
    sub.add_parser("run", help="Treina, avalia e aplica a estratégia de fusão")
    predict = sub.add_parser("predict", help="Aplica um modelo salvo por run a outro arquivo")
    predict.add_argument("--model", required=True, help="Nome do learner (pasta em <out>/models)")
    predict.add_argument("--input", required=True, help="Arquivo JSONL ou CSV de registros")
    ensemble = sub.add_parser("ensemble", help="Executa só o ensemble (voto suave ou stacking)")
    ensemble.add_argument("--manifest", default=None, help="Repete a execução descrita em um manifesto")
    sub.add_parser("hpo", help="Busca de hiperparâmetros com validação cruzada")
    sensitivity = sub.add_parser("sensitivity", help="Curva de desempenho por fração do treino")
    sensitivity.add_argument("--fractions", default=None,
                             help="Frações separadas por vírgula (padrão 0.1,...,0.9,1.0)")
    sub.add_parser("ablation", help="Voto suave deixando uma fonte de fora")
    sub.add_parser("sufficiency", help="Análise de suficiência de informação")
    report = sub.add_parser("report", help="Resumo em markdown de um JSON de métricas")
    report.add_argument("--input", default=None, help="JSON de métricas ou relatório (padrão: <out>/report.json)")
    return parser


def _config_path(args) -> Path:
    path = args.config or os.getenv(CONFIG_ENV_VAR)
    if not path:
        raise ConfigError(f"informe --config ou defina {CONFIG_ENV_VAR}")
    return Path(path)


def _fractions(raw: Optional[str]) -> List[float]:
    if not raw:
        return list(SENSITIVITY_FRACTIONS)
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"frações inválidas: '{raw}'")


def _print_json(data):
    print(json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True, default=str))


def execute(service: PipelineService, args) -> int:
    command = args.command
    if command == "prep":
        _print_json(service.prep())
    elif command == "run":
        report = service.run()
        print(f"Melhor modelo: {report['best_model']}")
        _print_json(report["summary"])
    elif command == "predict":
        print(service.predict(args.model, args.input))
    elif command == "ensemble":
        report = service.run(ensemble_only=True)
        _print_json(report["summary"])
    elif command == "hpo":
        _print_json(service.hpo())
    elif command == "sensitivity":
        print(service.sensitivity(_fractions(args.fractions)).to_markdown(index=False, floatfmt=".4f"))
    elif command == "ablation":
        print(service.ablation().to_markdown(index=False, floatfmt=".4f"))
    elif command == "sufficiency":
        _print_json(service.sufficiency())
    elif command == "report":
        print(service.report(args.input))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()

    # fase de validação: qualquer VaForgeError aqui sai com código 2
    try:
        config = load_run_config(_config_path(args))
        if args.command == "ensemble" and args.manifest:
            service = PipelineService.from_manifest(EnsembleManifest.load(args.manifest), config,
                                                    workers=args.workers, out=args.out)
        else:
            service = PipelineService(config, seed=args.seed, workers=args.workers, out=args.out)
        if args.command == "validate":
            report = service.validate()
            _print_json(report)
            return EXIT_VALIDATION_ERROR if report["errors"] else EXIT_OK
        if args.command != "report":
            service.prepare()
    except (VaForgeError, FileNotFoundError) as e:
        logger.error(f"[CLI] Validação falhou: {e}")
        for issue in getattr(e, "issues", [])[:20]:
            logger.error(f"[CLI]   {issue.to_dict()}")
        return EXIT_VALIDATION_ERROR

    try:
        return execute(service, args)
    except Exception as e:
        logger.error(f"[CLI] Erro em '{args.command}': {e}")
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
