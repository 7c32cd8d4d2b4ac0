"""Parametric search densities: Gaussians, Gaussian mixtures and the uniform box."""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
from scipy import linalg, stats
from scipy.special import logsumexp

from .exceptions import FactorizationError, InvalidArgumentError
from .oracle import BoxDomain

logger = logging.getLogger(__name__)

# Eigenvalue floor for covariances, relative to the squared domain scale.
COVARIANCE_FLOOR = 1e-9
_LOG_2PI = np.log(2.0 * np.pi)


def _as_rows(x, dimension: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim <= 1:
        pts = pts.reshape(1, -1)
    if pts.shape[1] != dimension:
        raise InvalidArgumentError(
            f"expected points of dimension {dimension}, got shape {np.shape(x)}"
        )
    return pts


def _squeeze(values: np.ndarray, x) -> Union[float, np.ndarray]:
    return float(values[0]) if np.ndim(x) <= 1 else values


def floor_covariance(covariance, floor: float) -> np.ndarray:
    """Symmetrize and lift every eigenvalue to at least `floor`."""
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    cov = 0.5 * (cov + cov.T)
    if not np.all(np.isfinite(cov)):
        raise InvalidArgumentError("covariance has non-finite entries")
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() >= floor:
        return cov
    eigvals = np.maximum(eigvals, floor)
    cov = (eigvecs * eigvals) @ eigvecs.T
    return 0.5 * (cov + cov.T)


class GaussianDensity:
    """Multivariate normal N(mean, covariance), immutable after construction."""

    def __init__(self, mean, covariance, scale: float = 1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        n = self.mean.shape[0]
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape != (n, n):
            raise InvalidArgumentError(f"covariance shape {cov.shape} does not match mean of length {n}")
        if not np.all(np.isfinite(self.mean)):
            raise InvalidArgumentError("mean has non-finite entries")
        self.scale = float(scale)
        self.floor = COVARIANCE_FLOOR * self.scale ** 2
        self.covariance = floor_covariance(cov, self.floor)
        try:
            self._chol = linalg.cholesky(self.covariance, lower=True)
        except linalg.LinAlgError as exc:
            raise FactorizationError("covariance is not factorizable after flooring") from exc
        self._log_det = 2.0 * np.sum(np.log(np.diag(self._chol)))
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    @property
    def cholesky(self) -> np.ndarray:
        return self._chol

    def logpdf(self, x):
        pts = _as_rows(x, self.dimension)
        diff = (pts - self.mean).T
        soln = linalg.solve_triangular(self._chol, diff, lower=True)
        values = -0.5 * (self.dimension * _LOG_2PI + self._log_det + np.sum(soln ** 2, axis=0))
        return _squeeze(values, x)

    def sample(self, rng: np.random.Generator, size=None):
        """One draw (size=None) or an array of `size` draws."""
        n = 1 if size is None else int(size)
        z = rng.standard_normal((n, self.dimension))
        draws = self.mean + z @ self._chol.T
        return draws[0] if size is None else draws

    def widened(self, factor: float = 2.0) -> "GaussianDensity":
        return GaussianDensity(self.mean, factor * np.asarray(self.covariance), scale=self.scale)

    def __repr__(self):
        return f"GaussianDensity(mean={self.mean.tolist()}, covariance={self.covariance.tolist()})"


class MixtureDensity:
    """Finite mixture sum_j weights[j] * components[j] of Gaussians."""

    def __init__(self, weights, components: Sequence[GaussianDensity]):
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if len(components) < 1:
            raise InvalidArgumentError("a mixture needs at least one component")
        if w.shape != (len(components),):
            raise InvalidArgumentError(
                f"got {w.shape[0]} weights for {len(components)} components"
            )
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError(f"mixture weights must be non-negative, got {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"mixture weights must sum to 1, got {w.sum()!r}")
        dims = {c.dimension for c in components}
        if len(dims) != 1:
            raise InvalidArgumentError(f"components disagree on dimension: {sorted(dims)}")
        self.weights = w / w.sum()
        self.weights.setflags(write=False)
        self.components: List[GaussianDensity] = list(components)

    @property
    def dimension(self) -> int:
        return self.components[0].dimension

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component_logpdfs(self, x) -> np.ndarray:
        """(m, M) matrix of ln(weight_j) + ln component_j(x_i)."""
        pts = _as_rows(x, self.dimension)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        cols = [np.atleast_1d(c.logpdf(pts)) for c in self.components]
        return np.column_stack(cols) + log_w

    def logpdf(self, x):
        values = logsumexp(self.component_logpdfs(x), axis=1)
        return _squeeze(values, x)

    def sample(self, rng: np.random.Generator, size=None):
        n = 1 if size is None else int(size)
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        draws = np.empty((n, self.dimension))
        for j, component in enumerate(self.components):
            idx = np.flatnonzero(labels == j)
            if idx.size:
                draws[idx] = component.sample(rng, size=idx.size)
        return draws[0] if size is None else draws

    def widened(self, factor: float = 2.0) -> "MixtureDensity":
        return MixtureDensity(self.weights, [c.widened(factor) for c in self.components])

    def __repr__(self):
        return f"MixtureDensity(weights={self.weights.tolist()}, n_components={self.n_components})"


@dataclass(frozen=True)
class UniformBoxDensity:
    box: BoxDomain

    @property
    def dimension(self) -> int:
        return self.box.dimension

    def logpdf(self, x):
        pts = _as_rows(x, self.dimension)
        values = np.where(self.box.contains(pts), -np.log(self.box.volume), -np.inf)
        return _squeeze(values, x)

    def sample(self, rng: np.random.Generator, size=None):
        n = 1 if size is None else int(size)
        b = self.box.half_width
        draws = rng.uniform(-b, b, size=(n, self.dimension))
        return draws[0] if size is None else draws

    def widened(self, factor: float = 2.0) -> "UniformBoxDensity":
        return self


Density = Union[GaussianDensity, MixtureDensity, UniformBoxDensity]


def as_mixture(density: Union[GaussianDensity, MixtureDensity]) -> MixtureDensity:
    if isinstance(density, MixtureDensity):
        return density
    return MixtureDensity([1.0], [density])


def uniform_mixture(densities: Sequence[Union[GaussianDensity, MixtureDensity]]) -> MixtureDensity:
    """Equal-weight average of densities, flattened into one mixture."""
    outer = 1.0 / len(densities)
    weights, components = [], []
    for density in densities:
        mix = as_mixture(density)
        weights.extend(outer * mix.weights)
        components.extend(mix.components)
    return MixtureDensity(np.asarray(weights), components)


def logpdf(density, x):
    return density.logpdf(x)


def sample(density, rng: np.random.Generator):
    return density.sample(rng)


def responsibilities(mix: MixtureDensity, x) -> np.ndarray:
    """Posterior component probabilities at x, computed in log space."""
    log_joint = mix.component_logpdfs(x)
    log_norm = logsumexp(log_joint, axis=1, keepdims=True)
    resp = np.exp(log_joint - log_norm)
    resp /= resp.sum(axis=1, keepdims=True)
    return resp[0] if np.ndim(x) <= 1 else resp


@dataclass(frozen=True)
class Ellipsoid:
    center: np.ndarray
    axes: np.ndarray  # columns are unit principal axes
    radii: np.ndarray


def confidence_ellipsoid(g: GaussianDensity, level: float) -> Ellipsoid:
    """Region {x : (x - mu)^T Sigma^-1 (x - mu) <= chi2_n(level)}."""
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"level must lie in (0, 1), got {level}")
    eigvals, eigvecs = np.linalg.eigh(g.covariance)
    radius2 = stats.chi2.ppf(level, df=g.dimension)
    return Ellipsoid(center=np.array(g.mean), axes=eigvecs, radii=np.sqrt(radius2 * eigvals))
