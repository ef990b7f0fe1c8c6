"""Dynamic BinVal benchmark problems and a parameterized (mu +/, lambda) GA."""
from .core import SeedSpec, StreamTag, derive_seed, hamming, make_rng
from .ga import BACKEND, COMPILED_AVAILABLE, ConfigError, GAParams, RunResult, run_ga
from .metrics import RunSet, ert, success_rate
from .problems import DynBinValProblem, InstanceTransform, ProblemVersion, make_problem
from .runner import ExperimentConfig, run_experiment

__all__ = [
    "BACKEND", "COMPILED_AVAILABLE", "ConfigError", "DynBinValProblem", "ExperimentConfig",
    "GAParams", "InstanceTransform", "ProblemVersion", "RunResult", "RunSet", "SeedSpec",
    "StreamTag", "derive_seed", "ert", "hamming", "make_problem", "make_rng", "run_experiment",
    "run_ga", "success_rate",
]
