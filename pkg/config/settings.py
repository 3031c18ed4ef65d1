import os
import logging
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

# 根據環境變數決定要載入的環境配置檔案
ENV = os.getenv("ENV", "development")

if ENV == "production":
    env_filename = ".env.prod"
elif ENV == "test":
    env_filename = ".env.test"
else:
    env_filename = ".env"

# The env file lives in the project root, one level up from config/
PROJECT_ROOT = Path(__file__).resolve().parent.parent
dotenv_path = PROJECT_ROOT / env_filename
if dotenv_path.exists():
    load_dotenv(dotenv_path=dotenv_path)
    logger.info(f"Loaded environment variables from {dotenv_path} (ENV={ENV})")
elif (Path.cwd() / env_filename).exists():
    load_dotenv(Path.cwd() / env_filename)
    logger.info(f"Loaded environment variables from current working directory {env_filename} (ENV={ENV})")
else:
    fallback_path = PROJECT_ROOT / ".env"
    if fallback_path.exists():
        load_dotenv(dotenv_path=fallback_path)
        logger.warning(f"Specified {env_filename} not found, loaded fallback .env file (ENV={ENV})")
    else:
        logger.debug(f"Neither {env_filename} nor .env file found (ENV={ENV}), using defaults")


class RestorationSettings(BaseSettings):
    """
    Tunable defaults for restoration runs, read from ``HSPRIOR_*`` variables.
    """
    model_config = SettingsConfigDict(env_prefix="HSPRIOR_", extra="ignore")

    # ADAM
    lr: float = Field(0.001, gt=0)
    beta1: float = Field(0.9, gt=0, lt=1)
    beta2: float = Field(0.999, gt=0, lt=1)
    eps: float = Field(1e-8, gt=0)

    # Network / input
    leaky_slope: float = Field(0.1, gt=0, lt=1)
    input_noise_range: float = Field(0.1, gt=0)
    perturb_sigma: float = Field(0.0, ge=0)

    # Iteration budgets per task
    denoise_iters: int = Field(3000, gt=0)
    inpaint_iters: int = Field(5000, gt=0)
    superres_iters: int = Field(2000, gt=0)

    seed: int = Field(0, ge=0)
    log_every: int = Field(100, gt=0)
    history_timing: bool = False

    log_level: str = "INFO"
    debug: bool = False


settings = RestorationSettings()

ADAM_DEFAULTS = {
    "lr": settings.lr,
    "beta1": settings.beta1,
    "beta2": settings.beta2,
    "eps": settings.eps,
}

TASK_BUDGETS = {
    "denoise": settings.denoise_iters,
    "inpaint": settings.inpaint_iters,
    "superres": settings.superres_iters,
}

# Application Configuration
DEBUG_MODE = settings.debug or os.getenv("DEBUG", "False").lower() == "true"
LOG_LEVEL = os.getenv("LOG_LEVEL", settings.log_level).upper()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'


def configure_logging(level: str | None = None) -> None:
    """
    Configure root logging for command-line entry points.

    Args:
        level: Override for LOG_LEVEL (e.g. "DEBUG")
    """
    resolved = (level or ("DEBUG" if DEBUG_MODE else LOG_LEVEL)).upper()
    logging.basicConfig(level=resolved, format=LOG_FORMAT, datefmt=LOG_DATEFMT)


if __name__ == '__main__':
    print(f"Current Environment: {ENV}")
    print(f"Environment File: {env_filename}")
    print(f"ADAM defaults: {ADAM_DEFAULTS}")
    print(f"Task budgets: {TASK_BUDGETS}")
    print(f"Debug Mode: {DEBUG_MODE}")
    print(f"Log Level: {LOG_LEVEL}")
