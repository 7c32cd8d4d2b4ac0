"""Importance-sampling estimators and Monte Carlo diagnostics."""

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .exceptions import (
    EmptySupportError,
    InvalidArgumentError,
    SamplerExhaustedError,
    UndefinedScoreError,
)
from .oracle import Benchmark, OracleHandle
from .target import BoltzmannSpec, Dataset, Sample

logger = logging.getLogger(__name__)

KL_GRID_SIZE = 512
MAX_REJECTION_PROPOSALS = 10 ** 6


@dataclass(frozen=True)
class HoldoutScore:
    value: float
    effective_support: int

    @property
    def defined(self) -> bool:
        return self.effective_support > 0

    @property
    def rank_value(self) -> float:
        """Undefined scores rank as the worst possible value."""
        return self.value if self.defined else np.inf


UNDEFINED_SCORE = HoldoutScore(np.inf, 0)


@dataclass(frozen=True)
class DiagnosticEstimate:
    value: float
    standard_error: float
    n: int
    infeasible_fraction: float = 0.0


def _as_dataset(validation: Union[Dataset, Sequence[Sample]]) -> Dataset:
    if isinstance(validation, Dataset):
        return validation
    return Dataset.from_samples(list(validation))


def holdout_performance(validation: Union[Dataset, Sequence[Sample]], density) -> HoldoutScore:
    """Self-normalized estimate of E_q[G] on held-out samples.

    g_hat = sum (q/h) g / sum (q/h) over feasible held-out samples.
    """
    data = _as_dataset(validation)
    if len(data) == 0:
        raise InvalidArgumentError("validation set is empty")
    feasible = data.feasible
    if not feasible.any():
        raise UndefinedScoreError("no feasible held-out samples")
    log_q = np.atleast_1d(density.logpdf(data.locations[feasible]))
    log_ratio = log_q - data.log_proposal[feasible]
    support = np.isfinite(log_ratio)
    if not support.any():
        raise UndefinedScoreError("density puts no mass on the held-out samples")
    log_ratio = log_ratio[support]
    ratio = np.exp(log_ratio - log_ratio.max())
    value = float(np.sum(ratio * data.g[feasible][support]) / np.sum(ratio))
    return HoldoutScore(value=value, effective_support=int(support.sum()))


def holdout_score_or_worst(validation, density) -> HoldoutScore:
    try:
        return holdout_performance(validation, density)
    except UndefinedScoreError:
        return UNDEFINED_SCORE


def unbiased_objective_estimate(data: Dataset, spec: BoltzmannSpec, density,
                                reference_g: float = 0.0) -> float:
    """Pooled importance estimate of -integral exp(-beta (G - reference_g)) ln q.

    Every sample counts in the 1/N average; infeasible samples contribute 0.
    """
    feasible = data.feasible
    if not feasible.any():
        raise EmptySupportError("no feasible samples in dataset")
    log_s = -spec.beta * (data.g[feasible] - reference_g) - data.log_proposal[feasible]
    log_q = np.atleast_1d(density.logpdf(data.locations[feasible]))
    if np.any(log_q == -np.inf):
        return np.inf
    return float(np.sum(np.exp(log_s) * -log_q) / len(data))


def importance_estimate(points, values, log_proposal, weight_density) -> float:
    """Self-normalized IS estimate of integral weight_density * f from factual samples."""
    log_ratio = np.atleast_1d(weight_density.logpdf(np.asarray(points, float))) - np.asarray(log_proposal)
    finite = np.isfinite(log_ratio)
    if not finite.any():
        raise UndefinedScoreError("weight density has no mass on the samples")
    ratio = np.exp(log_ratio[finite] - log_ratio[finite].max())
    return float(np.sum(ratio * np.asarray(values)[finite]) / np.sum(ratio))


def _mean_and_se(values: np.ndarray):
    k = values.shape[0]
    se = float(np.std(values, ddof=1) / np.sqrt(k)) if k > 1 else np.nan
    return float(np.mean(values)), se


def expected_g_diagnostic(density, oracle: OracleHandle, n: int = 1000,
                          rng: np.random.Generator = None) -> DiagnosticEstimate:
    """Sample mean of G over fresh draws from the density (feasible draws only)."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    rng = rng if rng is not None else np.random.default_rng()
    handle = oracle if oracle.diagnostic else oracle.as_diagnostic()
    draws = density.sample(rng, size=n)
    g, feasible = handle.query_many(draws, rng)
    if not feasible.any():
        raise UndefinedScoreError(f"all {n} diagnostic draws were infeasible")
    value, se = _mean_and_se(g[feasible])
    return DiagnosticEstimate(value, se, n, infeasible_fraction=float(1.0 - feasible.mean()))


@dataclass(frozen=True)
class GridBoltzmann:
    """Masked Boltzmann exp(-beta G) on a 2-D box, normalized by grid quadrature."""

    benchmark: Benchmark
    beta: float
    g_reference: float
    log_normalizer: float
    mean: np.ndarray
    covariance: np.ndarray
    expected_g: float

    @property
    def dimension(self) -> int:
        return self.benchmark.dimension

    def logpdf(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        g = self.benchmark.evaluate_many(pts)
        feasible = np.isfinite(g)
        values = np.full(g.shape, -np.inf)
        values[feasible] = -self.beta * (g[feasible] - self.g_reference) - self.log_normalizer
        return float(values[0]) if np.ndim(x) <= 1 else values


def boltzmann_grid(benchmark: Benchmark, beta: float, grid_size: int = KL_GRID_SIZE) -> GridBoltzmann:
    if benchmark.dimension != 2 or benchmark.box is None:
        raise InvalidArgumentError(
            f"grid quadrature needs a 2-D boxed benchmark, got {benchmark.id}"
        )
    b = benchmark.box.half_width
    width = 2.0 * b / grid_size
    centers = -b + width * (np.arange(grid_size) + 0.5)
    xx, yy = np.meshgrid(centers, centers, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    g = benchmark.function(pts)
    g_ref = float(g.min())
    log_w = -beta * (g - g_ref)
    log_total = logsumexp(log_w)
    p = np.exp(log_w - log_total)
    mean = p @ pts
    diff = pts - mean
    cov = (p[:, np.newaxis] * diff).T @ diff
    return GridBoltzmann(
        benchmark=benchmark,
        beta=float(beta),
        g_reference=g_ref,
        log_normalizer=float(log_total + 2.0 * np.log(width)),
        mean=mean,
        covariance=cov,
        expected_g=float(p @ g),
    )


def sample_boltzmann(handle: OracleHandle, beta: float, n: int, rng: np.random.Generator,
                     g_best: float, max_proposals: int = MAX_REJECTION_PROPOSALS) -> np.ndarray:
    """Rejection-sample p^beta: uniform proposals on the box, accept w.p. exp(-beta (G - g_best))."""
    box = handle.benchmark.box
    accepted = []
    n_accepted = 0
    proposals = 0
    chunk = max(n, 10_000)
    while n_accepted < n:
        if proposals >= max_proposals:
            raise SamplerExhaustedError(
                f"p^beta rejection sampler accepted {n_accepted}/{n} after {proposals} proposals"
            )
        size = min(chunk, max_proposals - proposals)
        pts = rng.uniform(-box.half_width, box.half_width, size=(size, box.dimension))
        g, feasible = handle.query_many(pts, rng)
        u = rng.uniform(size=size)
        with np.errstate(over="ignore", invalid="ignore"):
            keep = feasible & (u < np.exp(-beta * (np.where(feasible, g, 0.0) - g_best)))
        accepted.append(pts[keep])
        n_accepted += int(keep.sum())
        proposals += size
    return np.vstack(accepted)[:n]


def kl_pq_diagnostic(spec: BoltzmannSpec, oracle: OracleHandle, density, n: int = 1000,
                     rng: np.random.Generator = None, grid_size: int = KL_GRID_SIZE,
                     max_proposals: int = MAX_REJECTION_PROPOSALS) -> DiagnosticEstimate:
    """Sample mean of ln(p^beta / q) over draws from p^beta (2-D boxed benchmarks only)."""
    rng = rng if rng is not None else np.random.default_rng()
    handle = oracle if oracle.diagnostic else oracle.as_diagnostic()
    grid = boltzmann_grid(handle.benchmark, spec.beta, grid_size)
    g_best = min(grid.g_reference, handle.benchmark.optimum_value)
    draws = sample_boltzmann(handle, spec.beta, n, rng, g_best, max_proposals)
    log_ratio = np.atleast_1d(grid.logpdf(draws)) - np.atleast_1d(density.logpdf(draws))
    value, se = _mean_and_se(log_ratio)
    return DiagnosticEstimate(value, se, n)
