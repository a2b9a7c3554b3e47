# Interface de linha de comando: configuração, serviço de pipeline e subcomandos
from .main import build_parser, main
from .models import RunConfig, load_run_config
from .services import PipelineService

__all__ = ["PipelineService", "RunConfig", "build_parser", "load_run_config", "main"]
