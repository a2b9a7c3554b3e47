import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

CLI_NAME = "vaforge"
CLI_DESCRIPTION = "Classificação de causa de morte em autópsias verbais com fusão de narrativa e questionário"
CLI_VERSION = "1.0.0"

BASE_DIR = Path(__file__).parent.parent
CONFIG_DIR = BASE_DIR / "config"
TAXONOMY_FILE = CONFIG_DIR / "taxonomy_level3.csv"
TEMPLATES_FILE = CONFIG_DIR / "question_templates.csv"
SEARCH_SPACES_FILE = CONFIG_DIR / "search_spaces.json"
EXAMPLE_RUN_CONFIG = CONFIG_DIR / "run_config.example.json"

CONFIG_ENV_VAR = "VAFORGE_CONFIG"

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

DEFAULT_SEED = 42
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_FOLDS = 5
DEFAULT_SVD_K = 450
CHANCE_CSMF = 0.632
DEFAULT_OUTPUT_DIR = "results"
SENSITIVITY_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_VALIDATION_ERROR = 2
