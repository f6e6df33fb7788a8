"""Command-line interface: ``aerialsplat <command>``."""
from .main import CHECK_FAILED, CONFIG_ERROR, IO_ERROR, MISSING, NUMERIC, OK, build_parser, main
from .runconfig import RunConfig

__all__ = ["CHECK_FAILED", "CONFIG_ERROR", "IO_ERROR", "MISSING", "NUMERIC", "OK", "RunConfig", "build_parser",
           "main"]
