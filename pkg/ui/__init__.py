# Command-line surface for kgap
from .cli import build_parser, main, run

__all__ = ["build_parser", "main", "run"]
