"""Weighted density fitting: closed-form Gaussian moments and weighted EM."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .config import EmConfig
from .density import COVARIANCE_FLOOR, GaussianDensity, MixtureDensity, floor_covariance
from .exceptions import EmptySupportError, InvalidArgumentError

logger = logging.getLogger(__name__)

# Responsibility mass below which a component counts as collapsed.
COLLAPSE_MASS = 1e-10
MAX_COLLAPSES = 3


@dataclass(frozen=True)
class FitResult:
    density: Union[GaussianDensity, MixtureDensity]
    objective: float
    em_iterations: int
    trace: Tuple[float, ...] = field(default=(), repr=False)
    restart: int = 0


def _prepare(points, weights) -> Tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if pts.shape[0] != w.shape[0]:
        raise InvalidArgumentError(f"{pts.shape[0]} points but {w.shape[0]} weights")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weights must be finite and non-negative")
    total = w.sum()
    if not total > 0:
        raise EmptySupportError("all weights are zero")
    return pts, w / total


def _weighted_moments(pts: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = np.average(pts, axis=0, weights=w)
    diff = pts - mean
    cov = (w[:, np.newaxis] * diff).T @ diff / w.sum()
    return mean, cov


def fit_gaussian_weighted(points, weights, scale: float = 1.0) -> GaussianDensity:
    """Weighted moment match: mu = sum s x / sum s, Sigma = sum s (x-mu)(x-mu)^T / sum s."""
    pts, w = _prepare(points, weights)
    # canonical row order so the fit does not depend on input order
    order = np.lexsort((w,) + tuple(pts.T[::-1]))
    mean, cov = _weighted_moments(pts[order], w[order])
    return GaussianDensity(mean, cov, scale=scale)


def weighted_cross_entropy(points, weights, density) -> float:
    """Self-normalized -sum s ln q(x) / sum s."""
    pts, w = _prepare(points, weights)
    pos = w > 0
    log_q = np.atleast_1d(density.logpdf(pts[pos]))
    if np.any(log_q == -np.inf):
        return np.inf
    return float(-np.sum(w[pos] * log_q) / np.sum(w[pos]))


def fit_mixture_em(
        points,
        weights,
        n_components: int,
        cfg: Optional[EmConfig] = None,
        rng: Optional[np.random.Generator] = None,
        scale: float = 1.0,
) -> FitResult:
    """Best of `cfg.n_restarts` weighted-EM runs; ties go to the earliest restart."""
    if n_components < 1:
        raise InvalidArgumentError(f"n_components must be >= 1, got {n_components}")
    cfg = cfg or EmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    pts, w = _prepare(points, weights)

    if n_components == 1:
        density = fit_gaussian_weighted(pts, w, scale=scale)
        objective = weighted_cross_entropy(pts, w, density)
        return FitResult(density, objective, 0, (objective,), 0)

    seeds = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(cfg.n_restarts)
    best: Optional[FitResult] = None
    for restart, seed in enumerate(seeds):
        result = _em_restart(pts, w, n_components, cfg, np.random.default_rng(seed), scale, restart)
        logger.debug(
            "EM restart finished",
            extra={"restart": restart, "objective": result.objective,
                   "em_iterations": result.em_iterations,
                   "components": _n_components(result.density)},
        )
        if best is None or result.objective < best.objective:
            best = result
    return best


def _n_components(density) -> int:
    return density.n_components if isinstance(density, MixtureDensity) else 1


def _mixture(phi, means, covs, scale) -> MixtureDensity:
    return MixtureDensity(phi, [GaussianDensity(m, c, scale=scale) for m, c in zip(means, covs)])


def _objective(mix: MixtureDensity, pts, w, pos) -> Tuple[float, np.ndarray, np.ndarray]:
    """-sum w ln q over positive-weight points, with the joint and marginal log densities."""
    log_joint = mix.component_logpdfs(pts)
    log_q = logsumexp(log_joint, axis=1)
    return float(-np.sum(w[pos] * log_q[pos])), log_joint, log_q


def _em_restart(pts, w, n_components, cfg: EmConfig, rng, scale, restart) -> FitResult:
    pos = w > 0
    floor = COVARIANCE_FLOOR * scale ** 2
    _, pooled_cov = _weighted_moments(pts, w)
    pooled_cov = floor_covariance(pooled_cov, floor)

    unique_pts, inverse = np.unique(pts[pos], axis=0, return_inverse=True)
    unique_w = np.bincount(inverse.reshape(-1), weights=w[pos])
    if unique_pts.shape[0] < n_components:
        logger.warning(
            "Fewer distinct weighted points than mixture components; reducing component count",
            extra={"requested": n_components, "distinct_points": unique_pts.shape[0]},
        )
        n_components = unique_pts.shape[0]
    chosen = rng.choice(unique_pts.shape[0], size=n_components, replace=False,
                        p=unique_w / unique_w.sum())
    means = [unique_pts[i].copy() for i in chosen]
    covs = [pooled_cov.copy() for _ in range(n_components)]
    phi = np.full(n_components, 1.0 / n_components)
    collapses = [0] * n_components

    mix = _mixture(phi, means, covs, scale)
    objective, log_joint, log_q = _objective(mix, pts, w, pos)
    trace = [objective]
    iterations = 0
    while iterations < cfg.max_iters - 1:
        resp = np.exp(log_joint - log_q[:, np.newaxis])
        mass = w[:, np.newaxis] * resp
        nk = mass.sum(axis=0)

        keep = []
        for j in range(len(means)):
            if nk[j] <= COLLAPSE_MASS:
                collapses[j] += 1
                if collapses[j] >= MAX_COLLAPSES and len(means) > 1:
                    logger.warning(
                        "Mixture component collapsed repeatedly; dropping it",
                        extra={"restart": restart, "component": j, "remaining": len(means) - 1},
                    )
                    continue
                means[j] = pts[rng.choice(pts.shape[0], p=w)].copy()
                covs[j] = pooled_cov.copy()
                nk[j] = COLLAPSE_MASS
            else:
                means[j] = mass[:, j] @ pts / nk[j]
                diff = pts - means[j]
                covs[j] = (mass[:, j, np.newaxis] * diff).T @ diff / nk[j]
            keep.append(j)
        means = [means[j] for j in keep]
        covs = [covs[j] for j in keep]
        collapses = [collapses[j] for j in keep]
        phi = nk[keep] / nk[keep].sum()

        # floored covariances and re-seeded components can undo the EM descent
        candidate = _mixture(phi, means, covs, scale)
        candidate_objective, candidate_joint, candidate_log_q = _objective(candidate, pts, w, pos)
        if candidate_objective > objective:
            logger.debug(
                "EM step would raise the objective; keeping the previous fit",
                extra={"restart": restart, "em_iterations": iterations,
                       "increase": candidate_objective - objective},
            )
            break
        improvement = objective - candidate_objective
        mix, objective, log_joint, log_q = candidate, candidate_objective, candidate_joint, candidate_log_q
        trace.append(objective)
        iterations += 1
        if improvement < cfg.tol:
            break

    density = mix if mix.n_components > 1 else mix.components[0]
    return FitResult(density, objective, iterations, tuple(trace), restart)
