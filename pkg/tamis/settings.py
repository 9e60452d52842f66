import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


@dataclass(frozen=True)
class Settings:
    """Process-level defaults read from the environment (or a .env file)"""
    output_dir: str
    workers: int
    log_level: str
    blackbox_timeout: float


def load_settings(dotenv_path=None) -> Settings:
    """Load environment variables and return the resolved settings"""
    load_dotenv(dotenv_path)

    return Settings(
        output_dir=os.getenv('TAMIS_OUTPUT_DIR', 'results'),
        workers=max(1, int(os.getenv('TAMIS_WORKERS', '1'))),
        log_level=os.getenv('TAMIS_LOG_LEVEL', 'INFO').upper(),
        blackbox_timeout=float(os.getenv('TAMIS_BLACKBOX_TIMEOUT', '30')),
    )


def configure_logging(level: str = 'INFO') -> None:
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)
