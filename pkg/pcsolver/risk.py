"""Risk of choosing between two candidates from jointly Gaussian loss estimates."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm

from .exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 10 ** 4


@dataclass(frozen=True)
class TwoPhiModel:
    """Estimates (l1, l2) ~ N(mu, C) with C's eigen-axes along and across the diagonal.

    sigma_a is the spread along (1, 1), sigma_b across it.
    """

    mu: np.ndarray
    sigma_a: float
    sigma_b: float
    true_losses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(-1))
        object.__setattr__(self, "true_losses", np.asarray(self.true_losses, dtype=float).reshape(-1))
        if self.mu.shape != (2,) or self.true_losses.shape != (2,):
            raise InvalidArgumentError("mu and true_losses must have exactly two entries")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.true_losses))):
            raise InvalidArgumentError("mu and true_losses must be finite")
        if not self.sigma_a >= 0:
            raise InvalidArgumentError(f"sigma_a must be non-negative, got {self.sigma_a}")
        if not self.sigma_b > 0:
            raise InvalidArgumentError(f"sigma_b must be positive, got {self.sigma_b}")

    @property
    def covariance(self) -> np.ndarray:
        a2, b2 = self.sigma_a ** 2, self.sigma_b ** 2
        diag, off = 0.5 * (a2 + b2), 0.5 * (a2 - b2)
        return np.array([[diag, off], [off, diag]])


def prob_choose_phi1(m: TwoPhiModel) -> float:
    """P(l1 <= l2); l1 - l2 has variance 2 sigma_b^2."""
    return float(norm.cdf((m.mu[1] - m.mu[0]) / (np.sqrt(2.0) * m.sigma_b)))


def prob_choose_phi2(m: TwoPhiModel) -> float:
    return 1.0 - prob_choose_phi1(m)


def risk_two_phi(m: TwoPhiModel) -> float:
    """Expected true loss of the chosen candidate minus the smaller true loss."""
    l1, l2 = m.true_losses
    step = 1.0 if l2 - l1 > 0 else 0.0
    return float((prob_choose_phi1(m) - step) * (l1 - l2))


@dataclass(frozen=True)
class MonteCarloRisk:
    prob_phi1: float
    prob_phi1_se: float
    risk: float
    risk_se: float
    n: int


def mc_validate(m: TwoPhiModel, n: int = MIN_MC_SAMPLES,
                rng: Optional[np.random.Generator] = None) -> MonteCarloRisk:
    """Draw (l1, l2) from the model, pick the argmin (ties to phi1) and average the regret."""
    if n < MIN_MC_SAMPLES:
        raise InvalidArgumentError(f"n must be >= {MIN_MC_SAMPLES}, got {n}")
    cov = m.covariance
    if np.linalg.eigvalsh(cov).min() < -1e-12 * max(1.0, np.abs(cov).max()):
        raise InvalidArgumentError("estimator covariance is not positive semi-definite")
    rng = rng if rng is not None else np.random.default_rng()
    draws = rng.multivariate_normal(m.mu, cov, size=n, method="eigh")
    choose1 = draws[:, 0] <= draws[:, 1]
    l1, l2 = m.true_losses
    regret = np.where(choose1, l1, l2) - min(l1, l2)
    p = float(choose1.mean())
    result = MonteCarloRisk(
        prob_phi1=p,
        prob_phi1_se=float(np.sqrt(p * (1.0 - p) / n)),
        risk=float(regret.mean()),
        risk_se=float(regret.std(ddof=1) / np.sqrt(n)),
        n=n,
    )
    logger.debug("Monte Carlo risk validation", extra={"n": n, "prob_phi1": p, "risk": result.risk})
    return result
