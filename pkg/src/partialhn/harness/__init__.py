"""Configuration, experiment loop, reports and the command line."""

from .config import OUTPUT_ROOT_ENV, ConfigError, RunConfig, load_config
from .reports import (
    emit_compression_table,
    emit_memory_table,
    matrix_series,
    plot_cosine,
    plot_experience_over_time,
    plot_matrix,
)
from .run import RunArtifacts, build_stream, build_strategy, run

__all__ = [
    "OUTPUT_ROOT_ENV",
    "ConfigError",
    "RunArtifacts",
    "RunConfig",
    "build_strategy",
    "build_stream",
    "emit_compression_table",
    "emit_memory_table",
    "load_config",
    "matrix_series",
    "plot_cosine",
    "plot_experience_over_time",
    "plot_matrix",
    "run",
]
