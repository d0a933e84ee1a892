"""Configuração de logs (loguru) no formato ``[NIVEL] mensagem``."""

import sys

from loguru import logger

LOG_FORMAT = "[{level}] {message}"


def configure_logging(level: str = "INFO") -> None:
    """
    Troca os handlers do loguru por um único sink em stderr.

    Args:
        level: Nível de log (DEBUG, INFO, WARNING, ERROR)
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
