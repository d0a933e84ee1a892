"""Interface de linha de comando do gerador."""

from .app import build_parser, main

__all__ = ["build_parser", "main"]
