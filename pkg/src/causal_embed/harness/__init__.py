"""Config-driven experiment pipelines and the command line."""

from .config import ExperimentConfig, load_config, parse_config
from .pipeline import aggregate, build_queries, report, run_experiment

__all__ = ["ExperimentConfig", "aggregate", "build_queries", "load_config", "parse_config", "report", "run_experiment"]
