"""Perturbation-based optimizer family with a parallel two-worker pipeline,
per-step descent verification, and a benchmark harness.

Hot vector kernels live in a compiled extension when available, with a pure
numpy fallback selected at import (see ``samkit.backend``).
"""

__version__ = "0.1.0"

from samkit import backend
from samkit.errors import (
    ConfigError,
    NumericInputError,
    PipelineError,
    SamkitError,
    StateError,
)
from samkit.optimizers import BaseSpec, OptimizerSpec
from samkit.pipeline import (
    IterateTrace,
    RunConfig,
    TimingModel,
    run_parallel_two_workers,
    run_serial,
    simulate_wall_clock,
)
from samkit.vecmath import Schedule, SeededRng

__all__ = [
    "backend",
    "BaseSpec",
    "ConfigError",
    "IterateTrace",
    "NumericInputError",
    "OptimizerSpec",
    "PipelineError",
    "RunConfig",
    "SamkitError",
    "Schedule",
    "SeededRng",
    "StateError",
    "TimingModel",
    "run_parallel_two_workers",
    "run_serial",
    "simulate_wall_clock",
]
