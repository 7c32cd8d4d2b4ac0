"""Fit-based Monte Carlo and the elite-objective estimator.

A quadratic least-squares surrogate is fitted to factual (x, g) pairs. Integrals
are then estimated from fictitious samples of the surrogate, optionally with
correlated Gaussian noise added so that the fictitious oracle is not exact.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist
from sklearn.preprocessing import PolynomialFeatures

from .density import uniform_mixture
from .exceptions import (
    DegenerateDesignError,
    FactorizationError,
    InvalidArgumentError,
    UndefinedScoreError,
)

logger = logging.getLogger(__name__)

DEFAULT_FICTITIOUS_TUPLES = 2000
MAX_JITTER_ESCALATIONS = 3


@dataclass(frozen=True)
class SurrogateFit:
    """omega(x) = constant + linear . x + x^T quadratic x."""

    constant: float
    linear: np.ndarray
    quadratic: np.ndarray
    residual_rms: float
    family: str = "quadratic-least-squares"

    @property
    def dimension(self) -> int:
        return self.linear.shape[0]

    def predict(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dimension:
            raise InvalidArgumentError(
                f"expected points of dimension {self.dimension}, got shape {pts.shape}"
            )
        return self.constant + pts @ self.linear + np.einsum("ij,jk,ik->i", pts, self.quadratic, pts)


def n_quadratic_terms(dimension: int) -> int:
    return (dimension + 1) * (dimension + 2) // 2


def fit_surface(points, values) -> SurrogateFit:
    """Least-squares quadratic through the (point, value) pairs."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    y = np.asarray(values, dtype=float).reshape(-1)
    if pts.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"{pts.shape[0]} points but {y.shape[0]} values")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("surface fitting needs finite points and values")
    n = pts.shape[1]
    needed = n_quadratic_terms(n)
    if pts.shape[0] < needed:
        raise InvalidArgumentError(
            f"a quadratic in {n} dimensions needs at least {needed} samples, got {pts.shape[0]}"
        )

    poly = PolynomialFeatures(degree=2)
    design = poly.fit_transform(pts)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateDesignError(
            f"quadratic design has rank {rank} < {design.shape[1]}; samples are not in general position"
        )

    constant = 0.0
    linear = np.zeros(n)
    quadratic = np.zeros((n, n))
    for c, powers in zip(coef, poly.powers_):
        nonzero = np.flatnonzero(powers)
        if powers.sum() == 0:
            constant = float(c)
        elif powers.sum() == 1:
            linear[nonzero[0]] = c
        elif nonzero.size == 1:
            quadratic[nonzero[0], nonzero[0]] = c
        else:
            i, j = nonzero
            quadratic[i, j] = quadratic[j, i] = c / 2.0

    residual = design @ coef - y
    rms = float(np.sqrt(np.mean(residual ** 2)))
    logger.debug("Fitted quadratic surface", extra={"samples": len(y), "residual_rms": rms})
    return SurrogateFit(constant, linear, quadratic, rms)



def surface_minimum(fit: SurrogateFit, half_width: float, grid_size: int = 201) -> np.ndarray:
    """Lowest surrogate value on a regular 2-D grid over the box ||x||_inf <= half_width."""
    if fit.dimension != 2:
        raise InvalidArgumentError(f"grid search needs a 2-D surrogate, got dimension {fit.dimension}")
    axis = np.linspace(-half_width, half_width, grid_size)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    return grid[int(np.argmin(fit.predict(grid)))]


@dataclass(frozen=True)
class NoiseKernel:
    """Squared-exponential covariance amplitude^2 exp(-|xi - xj|^2 / 2 l^2) + jitter I."""

    amplitude: float
    length_scale: float
    jitter: float = 1e-9

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidArgumentError(f"amplitude must be non-negative, got {self.amplitude}")
        if not self.length_scale > 0:
            raise InvalidArgumentError(f"length_scale must be positive, got {self.length_scale}")
        if not self.jitter > 0:
            raise InvalidArgumentError(f"jitter must be positive, got {self.jitter}")

    @classmethod
    def default_for(cls, fit: SurrogateFit, half_width: float) -> "NoiseKernel":
        return cls(amplitude=fit.residual_rms, length_scale=half_width / 4.0)

    def covariance(self, points: np.ndarray) -> np.ndarray:
        sq = cdist(points, points, "sqeuclidean")
        return self.amplitude ** 2 * np.exp(-sq / (2.0 * self.length_scale ** 2))


def fictitious_values(fit: SurrogateFit, kernel: NoiseKernel, points, rng: np.random.Generator) -> np.ndarray:
    """omega at every point plus one joint draw of correlated noise."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise InvalidArgumentError("points must not be empty")
    mean = fit.predict(pts)
    if kernel.amplitude == 0:
        return mean
    cov = kernel.covariance(pts)
    jitter = kernel.jitter
    for attempt in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            chol = linalg.cholesky(cov + jitter * np.eye(len(mean)), lower=True)
            break
        except linalg.LinAlgError:
            logger.debug("Noise covariance not factorizable; raising jitter",
                         extra={"attempt": attempt, "jitter": jitter})
            jitter *= 10.0
    else:
        raise FactorizationError(
            f"noise covariance not factorizable with jitter up to {jitter / 10.0:g}"
        )
    return mean + chol @ rng.standard_normal(len(mean))


def fb_integral_estimate(fit: SurrogateFit, weight_density, n_fictitious: int,
                         rng: np.random.Generator, kernel: Optional[NoiseKernel] = None) -> float:
    """Mean of the surrogate (or of fictitious values) over draws from weight_density."""
    if n_fictitious < 1:
        raise InvalidArgumentError(f"n_fictitious must be >= 1, got {n_fictitious}")
    draws = weight_density.sample(rng, size=n_fictitious)
    if kernel is None:
        values = fit.predict(draws)
    else:
        values = fictitious_values(fit, kernel, draws, rng)
    return float(np.mean(values))


def elite_estimate(q, h_c, fit: SurrogateFit, kernel: NoiseKernel, K: int,
                   N_T: int = DEFAULT_FICTITIOUS_TUPLES,
                   rng: Optional[np.random.Generator] = None) -> float:
    """Self-normalized estimate of E[min of K fictitious values] for K iid draws from q.

    Tuples are drawn from h_c and weighted by prod q/h_c.
    """
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    if N_T < 1:
        raise InvalidArgumentError(f"N_T must be >= 1, got {N_T}")
    rng = rng if rng is not None else np.random.default_rng()
    flat = np.atleast_2d(h_c.sample(rng, size=N_T * K))
    log_ratio = (np.atleast_1d(q.logpdf(flat)) - np.atleast_1d(h_c.logpdf(flat))).reshape(N_T, K).sum(axis=1)
    tuples = flat.reshape(N_T, K, -1)

    if kernel.amplitude == 0:
        minima = fit.predict(flat).reshape(N_T, K).min(axis=1)
    else:
        streams = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(N_T)
        minima = np.array([
            fictitious_values(fit, kernel, tuples[i], np.random.default_rng(streams[i])).min()
            for i in range(N_T)
        ])

    finite = np.isfinite(log_ratio)
    if not finite.any():
        raise UndefinedScoreError("every elite tuple has zero weight under q")
    w = np.exp(log_ratio[finite] - log_ratio[finite].max())
    return float(np.sum(w * minima[finite]) / np.sum(w))


def elite_scores(candidates: Sequence, h_c, fit: SurrogateFit, kernel: NoiseKernel, K: int,
                 N_T: int = DEFAULT_FICTITIOUS_TUPLES,
                 rng: Optional[np.random.Generator] = None) -> List[float]:
    """elite_estimate for every candidate on shared random numbers; undefined ones are +inf."""
    if not candidates:
        raise InvalidArgumentError("at least one candidate density is required")
    rng = rng if rng is not None else np.random.default_rng()
    h_c = h_c if h_c is not None else uniform_mixture(list(candidates))
    seed = int(rng.integers(2 ** 63))
    scores = []
    for index, candidate in enumerate(candidates):
        try:
            scores.append(elite_estimate(candidate, h_c, fit, kernel, K, N_T, np.random.default_rng(seed)))
        except UndefinedScoreError:
            logger.debug("Elite estimate undefined for candidate", extra={"candidate": index})
            scores.append(np.inf)
    return scores


def elite_select(candidates: Sequence, h_c, fit: SurrogateFit, kernel: NoiseKernel, K: int,
                 N_T: int = DEFAULT_FICTITIOUS_TUPLES,
                 rng: Optional[np.random.Generator] = None) -> int:
    """Index of the candidate with the lowest elite estimate; ties go to the lowest index."""
    scores = elite_scores(candidates, h_c, fit, kernel, K, N_T, rng)
    if not np.isfinite(scores).any():
        raise UndefinedScoreError("elite estimate undefined for every candidate")
    return int(np.argmin(scores))


def elite_min_distribution(values, probs, K: int) -> Tuple[np.ndarray, np.ndarray]:
    """Exact law of the minimum of K iid draws on a finite support.

    P(min >= v) = (sum of probs over values >= v)^K. Returns (sorted support, pmf).
    """
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    values = np.asarray(values, dtype=float).reshape(-1)
    probs = np.asarray(probs, dtype=float).reshape(-1)
    if values.shape != probs.shape or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise InvalidArgumentError("probs must be a distribution over values")
    support, inverse = np.unique(values, return_inverse=True)
    mass = np.bincount(inverse, weights=probs)
    tail = np.cumsum(mass[::-1])[::-1]
    survival = tail ** K
    pmf = survival - np.append(survival[1:], 0.0)
    return support, pmf


def elite_expectation(values, probs, K: int) -> float:
    support, pmf = elite_min_distribution(values, probs, K)
    return float(support @ pmf)
