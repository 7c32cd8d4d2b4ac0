"""Immediate-sampling Probability Collectives for blackbox optimization."""

from .config import EmConfig, ExperimentConfig, ModelSpec, RunConfig
from .constrained import FeasibilityMask, MaskedDensity, constrained_fit, estimate_normalizer, sample_masked
from .density import GaussianDensity, MixtureDensity, UniformBoxDensity
from .exceptions import (
    ConfigError,
    DegenerateDesignError,
    EmptyFeasibleMassError,
    EmptySupportError,
    FactorizationError,
    InvalidArgumentError,
    PCError,
    RunAbortedError,
    SamplerExhaustedError,
    UndefinedScoreError,
)
from .oracle import BENCHMARKS, Benchmark, BoxDomain, OracleHandle, get_benchmark
from .optimizer import RunHistory, final_solutions, run
from .target import BoltzmannSpec, Dataset, Sample

__all__ = [
    "BENCHMARKS",
    "Benchmark",
    "BoltzmannSpec",
    "BoxDomain",
    "ConfigError",
    "Dataset",
    "DegenerateDesignError",
    "EmConfig",
    "EmptyFeasibleMassError",
    "EmptySupportError",
    "ExperimentConfig",
    "FactorizationError",
    "FeasibilityMask",
    "GaussianDensity",
    "InvalidArgumentError",
    "MaskedDensity",
    "MixtureDensity",
    "ModelSpec",
    "OracleHandle",
    "PCError",
    "RunAbortedError",
    "RunConfig",
    "RunHistory",
    "Sample",
    "SamplerExhaustedError",
    "UndefinedScoreError",
    "UniformBoxDensity",
    "constrained_fit",
    "estimate_normalizer",
    "final_solutions",
    "get_benchmark",
    "run",
    "sample_masked",
]
