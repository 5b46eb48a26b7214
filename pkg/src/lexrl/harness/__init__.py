"""Reproduction driver: configuration, training runs, evaluation outputs, CLI."""

from .config import RunConfig, load_config, parse_config
from .experiment import evaluate, train_all
from .metrics import EvalSummary, Trajectory, compute_metrics

__all__ = [
    "EvalSummary",
    "RunConfig",
    "Trajectory",
    "compute_metrics",
    "evaluate",
    "load_config",
    "parse_config",
    "train_all",
]
