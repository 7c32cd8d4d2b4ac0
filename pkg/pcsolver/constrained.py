"""Constrained optimization: feasibility masks, masked densities and masked fitting.

A masked density is q(x) = q~(x) Phi(x) / Z with Z = integral q~ Phi. Fitting
maximizes the Boltzmann-weighted log-likelihood of q~ on the data; the
corrected mode also subtracts ln Z, which pulls mass back inside the feasible
region instead of letting the mask cut it away.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np

from .config import EmConfig, ModelSpec
from .density import GaussianDensity, MixtureDensity, as_mixture
from .exceptions import (
    EmptyFeasibleMassError,
    EmptySupportError,
    InvalidArgumentError,
    SamplerExhaustedError,
)
from .oracle import BoxDomain
from .schedule import fit_model
from .target import BoltzmannSpec, Dataset, pooled_weight_view

logger = logging.getLogger(__name__)

DEFAULT_NORMALIZER_SAMPLES = 2000
DEFAULT_MAX_REJECTS = 10 ** 5
MAX_ASCENT_SWEEPS = 50
MIN_STEP = 1e-8

FitMode = Literal["kl-only", "corrected"]


@dataclass(frozen=True)
class FeasibilityMask:
    """Phi(x): 1 where `indicator` holds, `kappa` elsewhere (kappa=0 is the hard mask)."""

    indicator: Callable[[np.ndarray], np.ndarray]
    kappa: float = 0.0
    constant: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise InvalidArgumentError(f"kappa must lie in [0, 1], got {self.kappa}")

    def __call__(self, x):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.asarray(self.indicator(pts), dtype=bool)
        values = np.where(inside, 1.0, self.kappa)
        return float(values[0]) if np.ndim(x) <= 1 else values

    @property
    def is_hard(self) -> bool:
        return self.kappa == 0.0

    @classmethod
    def box(cls, box: BoxDomain, kappa: float = 0.0) -> "FeasibilityMask":
        return cls(box.contains, kappa)

    @classmethod
    def always(cls) -> "FeasibilityMask":
        return cls(lambda pts: np.ones(len(pts), dtype=bool), 0.0, constant=1.0)

    @classmethod
    def never(cls, kappa: float = 0.0) -> "FeasibilityMask":
        return cls(lambda pts: np.zeros(len(pts), dtype=bool), kappa, constant=kappa)


@dataclass(frozen=True)
class NormalizerEstimate:
    value: float
    standard_error: float
    n: int


def _normalizer_from_values(phi: np.ndarray) -> NormalizerEstimate:
    n = phi.shape[0]
    value = float(np.mean(phi))
    if value <= 0.0:
        raise EmptyFeasibleMassError(f"no feasible mass observed in {n} normalizer draws")
    return NormalizerEstimate(value, float(np.std(phi, ddof=1) / np.sqrt(n)), n)


def estimate_normalizer(base, mask: FeasibilityMask, n: int = DEFAULT_NORMALIZER_SAMPLES,
                        rng: Optional[np.random.Generator] = None) -> NormalizerEstimate:
    """Monte Carlo estimate of integral base * Phi, the mean of Phi over n draws from base."""
    if n < 100:
        raise InvalidArgumentError(f"n must be >= 100, got {n}")
    rng = rng if rng is not None else np.random.default_rng()
    return _normalizer_from_values(np.asarray(mask(base.sample(rng, size=n)), dtype=float))


def sample_masked_many(base, mask: FeasibilityMask, rng: np.random.Generator, n: int,
                       max_rejects: int = DEFAULT_MAX_REJECTS) -> np.ndarray:
    """n draws from base * Phi by rejection; at most `max_rejects` rejections in total."""
    if max_rejects < 1:
        raise InvalidArgumentError(f"max_rejects must be >= 1, got {max_rejects}")
    accepted: List[np.ndarray] = []
    n_accepted = 0
    rejects = 0
    size = n
    while n_accepted < n:
        draws = base.sample(rng, size=size)
        phi = np.asarray(mask(draws), dtype=float)
        keep = rng.uniform(size=size) < phi
        accepted.append(draws[keep])
        n_accepted += int(keep.sum())
        rejects += int(size - keep.sum())
        if n_accepted < n and rejects > max_rejects:
            raise SamplerExhaustedError(
                f"masked sampler rejected {rejects} draws (cap {max_rejects}) with "
                f"{n_accepted}/{n} accepted"
            )
        size = min(max(2 * size, 64), 4096)
    return np.vstack(accepted)[:n]


def sample_masked(base, mask: FeasibilityMask, rng: np.random.Generator,
                  max_rejects: int = DEFAULT_MAX_REJECTS) -> np.ndarray:
    """One draw from base * Phi: propose from base, accept with probability Phi(x)."""
    return sample_masked_many(base, mask, rng, 1, max_rejects)[0]


@dataclass(frozen=True)
class MaskedDensity:
    base: object
    mask: FeasibilityMask
    normalizer: float
    normalizer_se: float
    objective: Optional[float] = None
    initial_objective: Optional[float] = None

    def __post_init__(self):
        if not self.normalizer > 0:
            raise EmptyFeasibleMassError(f"normalizer must be positive, got {self.normalizer}")

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            log_phi = np.log(self.mask(x))
        return self.base.logpdf(x) + log_phi - np.log(self.normalizer)

    def sample(self, rng: np.random.Generator, size=None):
        draws = sample_masked_many(self.base, self.mask, rng, 1 if size is None else int(size))
        return draws[0] if size is None else draws


class _ScaledComponents:
    """Mixture reparametrized per component by mean and log-diagonal scale d.

    Component j has covariance D_j S_j D_j with D_j = diag(exp(d_j)); mixing
    weights stay fixed. Normalizer draws reuse fixed uniforms and normals so
    the objective is a deterministic function of the parameters.
    """

    def __init__(self, base, n_draws: int, rng: np.random.Generator):
        mix = as_mixture(base)
        self.single = isinstance(base, GaussianDensity)
        self.weights = mix.weights
        self.covariances = [c.covariance for c in mix.components]
        self.cholesky = [c.cholesky for c in mix.components]
        self.scale = mix.components[0].scale
        self.dim = mix.dimension
        self.m = mix.n_components
        cumulative = np.cumsum(self.weights)
        labels = np.searchsorted(cumulative, rng.uniform(size=n_draws), side="right")
        self.labels = np.minimum(labels, self.m - 1)
        self.normals = rng.standard_normal((n_draws, self.dim))
        self.theta0 = np.concatenate(
            [np.concatenate([c.mean, np.zeros(self.dim)]) for c in mix.components]
        )

    def _split(self, theta: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        blocks = theta.reshape(self.m, 2 * self.dim)
        return [(b[:self.dim], b[self.dim:]) for b in blocks]

    def initial_steps(self) -> np.ndarray:
        steps = []
        for cov in self.covariances:
            steps.append(np.concatenate([0.5 * np.sqrt(np.diag(cov)), np.full(self.dim, 0.5)]))
        return np.concatenate(steps)

    def density(self, theta: np.ndarray):
        components = [
            GaussianDensity(mean, np.exp(d)[:, np.newaxis] * cov * np.exp(d)[np.newaxis, :],
                            scale=self.scale)
            for (mean, d), cov in zip(self._split(theta), self.covariances)
        ]
        if self.single:
            return components[0]
        return MixtureDensity(self.weights, components)

    def normalizer_draws(self, theta: np.ndarray) -> np.ndarray:
        draws = np.empty((self.labels.shape[0], self.dim))
        for j, ((mean, d), chol) in enumerate(zip(self._split(theta), self.cholesky)):
            idx = self.labels == j
            draws[idx] = mean + (self.normals[idx] @ chol.T) * np.exp(d)
        return draws


def _log_likelihood(density, points: np.ndarray, weights: np.ndarray) -> float:
    pos = weights > 0
    log_q = np.atleast_1d(density.logpdf(points[pos]))
    if np.any(log_q == -np.inf):
        return -np.inf
    return float(np.sum(weights[pos] * log_q) / np.sum(weights[pos]))


def corrected_objective(density, points, weights, mask: FeasibilityMask, normalizer_draws) -> float:
    """Weighted mean ln q~ minus ln of the mean of Phi over `normalizer_draws`."""
    z = float(np.mean(mask(normalizer_draws)))
    if z <= 0:
        return -np.inf
    return _log_likelihood(density, points, weights) - np.log(z)


def constrained_fit(data: Dataset, spec: BoltzmannSpec, mask: FeasibilityMask, model: ModelSpec,
                    mode: FitMode = "kl-only", rng: Optional[np.random.Generator] = None,
                    em: Optional[EmConfig] = None, scale: float = 1.0,
                    normalizer_samples: int = DEFAULT_NORMALIZER_SAMPLES,
                    max_sweeps: int = MAX_ASCENT_SWEEPS) -> MaskedDensity:
    """Fit q~ with weights s * Phi; `corrected` then ascends the objective including -ln Z."""
    if mode not in ("kl-only", "corrected"):
        raise InvalidArgumentError(f"Unsupported constrained fit mode: {mode}")
    rng = rng if rng is not None else np.random.default_rng()
    view = pooled_weight_view(data, spec)
    weights = view.weights * np.asarray(mask(view.points), dtype=float)
    if not weights.sum() > 0:
        raise EmptySupportError("no sample carries weight under the feasibility mask")
    points = view.points
    base = fit_model(points, weights, model, rng, em, scale)

    if mode == "kl-only" or mask.constant is not None:
        estimate = estimate_normalizer(base, mask, normalizer_samples, rng)
        objective = _log_likelihood(base, points, weights) - np.log(estimate.value)
        return MaskedDensity(base, mask, estimate.value, estimate.standard_error,
                             objective=objective, initial_objective=objective)

    params = _ScaledComponents(base, normalizer_samples, rng)

    def objective_at(theta: np.ndarray) -> float:
        try:
            density = params.density(theta)
        except ArithmeticError:
            return -np.inf
        return corrected_objective(density, points, weights, mask, params.normalizer_draws(theta))

    theta = params.theta0.copy()
    best = objective_at(theta)
    initial = best
    if not np.isfinite(initial):
        raise EmptyFeasibleMassError("kl-only fit puts no observed mass in the feasible region")
    steps = params.initial_steps()
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        improved = False
        for i in range(theta.shape[0]):
            for direction in (1.0, -1.0):
                trial = theta.copy()
                trial[i] += direction * steps[i]
                value = objective_at(trial)
                if value > best:
                    theta, best, improved = trial, value, True
                    break
        if not improved:
            steps = steps / 2.0
            if np.all(steps < MIN_STEP):
                break

    logger.debug(
        "Corrected constrained fit finished",
        extra={"sweeps": sweeps, "initial_objective": initial, "objective": best},
    )
    phi = np.asarray(mask(params.normalizer_draws(theta)), dtype=float)
    estimate = _normalizer_from_values(phi)
    return MaskedDensity(params.density(theta), mask, estimate.value, estimate.standard_error,
                         objective=best, initial_objective=initial)
