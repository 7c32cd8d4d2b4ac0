"""Cross-validation for beta and for the model class, and bagging."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from sklearn.model_selection import KFold

from .config import BaggingConfig, BetaCvConfig, EmConfig, ModelSpec
from .density import MixtureDensity, uniform_mixture
from .estimator import HoldoutScore, UNDEFINED_SCORE, holdout_score_or_worst
from .exceptions import EmptySupportError, InvalidArgumentError
from .fit import fit_gaussian_weighted, fit_mixture_em
from .target import BoltzmannSpec, Dataset, pooled_weight_view

logger = logging.getLogger(__name__)

# Leading coefficient of the fitted quadratic (on the unit window) must exceed
# this fraction of the score scale for Q to count as convex.
CONVEXITY_RTOL = 1e-9
MAX_BOOTSTRAP_REDRAWS = 10


def fit_model(points, weights, model: ModelSpec, rng: np.random.Generator,
              em: Optional[EmConfig] = None, scale: float = 1.0):
    """Fit the density family named by `model` to weighted points."""
    if model.components == 1:
        return fit_gaussian_weighted(points, weights, scale=scale)
    return fit_mixture_em(points, weights, model.components, em, rng, scale=scale).density


def kfold_partition(data, K: int, rng: np.random.Generator) -> List[np.ndarray]:
    """K disjoint index arrays covering range(len(data)); sizes differ by at most one."""
    n = data if isinstance(data, (int, np.integer)) else len(data)
    if K < 2:
        raise InvalidArgumentError(f"K must be >= 2, got {K}")
    if n < K:
        raise InvalidArgumentError(f"cannot split {n} samples into {K} folds")
    kf = KFold(n_splits=K, shuffle=True, random_state=int(rng.integers(2 ** 32)))
    return [test for _, test in kf.split(np.zeros((n, 1)))]


@dataclass(frozen=True)
class _Fold:
    train: Dataset
    test: Dataset


def _prepare_folds(data: Dataset, K: int, rng: np.random.Generator) -> List[_Fold]:
    folds = kfold_partition(data, K, rng)
    prepared = []
    for k, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != k])
        prepared.append(_Fold(train=data.take(np.sort(train_idx)), test=data.take(np.sort(test_idx))))
    return prepared


def _fold_scores(folds: Sequence[_Fold], beta: float, model: ModelSpec, em: Optional[EmConfig],
                 seed: int, candidate: int, scale: float) -> List[HoldoutScore]:
    scores = []
    spec = BoltzmannSpec(beta)
    for k, fold in enumerate(folds):
        try:
            view = pooled_weight_view(fold.train, spec)
        except EmptySupportError:
            scores.append(UNDEFINED_SCORE)
            continue
        rng = np.random.default_rng([seed, k, candidate])
        density = fit_model(view.points, view.weights, model, rng, em, scale)
        scores.append(holdout_score_or_worst(fold.test, density))
    return scores


def average_score(scores: Sequence[HoldoutScore]) -> float:
    """Mean over folds with a defined score; +inf when none is defined."""
    defined = [s.value for s in scores if s.defined]
    return float(np.mean(defined)) if defined else np.inf


@dataclass(frozen=True)
class BetaCvPass:
    interval: Tuple[float, float]
    betas: np.ndarray
    scores: np.ndarray
    convex: bool
    beta_star: float


@dataclass
class BetaSearchResult:
    beta_star: float
    passes: List[BetaCvPass] = field(default_factory=list)
    fell_back: bool = False


def select_beta(betas, scores, lo: float, hi: float) -> Tuple[float, bool]:
    """Argmin over [lo, hi] of the least-squares quadratic, or of the line when Q is not convex.

    Returns (beta_star, convex). A flat line resolves to `lo`.
    """
    betas = np.asarray(betas, float)
    scores = np.asarray(scores, float)
    finite = np.isfinite(scores)
    b, s = betas[finite], scores[finite]
    if b.size == 0:
        raise InvalidArgumentError("no defined scores to fit")
    if b.size == 1:
        return float(b[0]), False
    scale = max(float(np.abs(s).max()), np.finfo(float).tiny)

    if b.size >= 3:
        quadratic = Polynomial.fit(b, s, 2)
        c0, c1, c2 = quadratic.coef
        if c2 > CONVEXITY_RTOL * scale:
            offset, slope = quadratic.mapparms()
            t_star = -c1 / (2.0 * c2)
            return float(np.clip((t_star - offset) / slope, lo, hi)), True

    line = Polynomial.fit(b, s, 1)
    c1 = line.coef[1]
    if c1 < -CONVEXITY_RTOL * scale:
        return float(hi), False
    return float(lo), False


def search_beta(beta0: float, cfg: BetaCvConfig,
                evaluate: Callable[[np.ndarray], np.ndarray]) -> BetaSearchResult:
    """Interval-extension loop: repeat until extIter > maxExtIter or Q is convex."""
    if not beta0 > 0:
        raise InvalidArgumentError(f"beta0 must be positive, got {beta0}")
    result = BetaSearchResult(beta_star=beta0)
    ext_iter = 0
    while True:
        lo, hi = cfg.k1 * beta0, cfg.k2 * beta0
        betas = np.linspace(lo, hi, cfg.n_beta)
        scores = np.asarray(evaluate(betas), dtype=float)
        if not np.isfinite(scores).any():
            logger.warning(
                "All cross-validation scores undefined; retaining beta0",
                extra={"beta0": beta0, "ext_iter": ext_iter},
            )
            result.beta_star = beta0
            result.fell_back = True
            return result
        beta_star, convex = select_beta(betas, scores, lo, hi)
        result.passes.append(BetaCvPass((lo, hi), betas, scores, convex, beta_star))
        logger.debug(
            "Beta cross-validation pass",
            extra={"ext_iter": ext_iter, "interval": (lo, hi), "convex": convex,
                   "beta_star": beta_star},
        )
        ext_iter += 1
        beta0 = beta_star
        result.beta_star = beta_star
        if ext_iter > cfg.max_ext_iter or convex:
            return result


def crossvalidate_beta(data: Dataset, beta0: float, cfg: BetaCvConfig, model: ModelSpec,
                       rng: np.random.Generator, em: Optional[EmConfig] = None,
                       scale: float = 1.0) -> float:
    """Pick beta by K-fold held-out g_hat; makes no oracle calls."""
    if len(data) == 0:
        raise InvalidArgumentError("dataset is empty")
    if len(data) < 2:
        logger.warning("Too few samples to cross-validate beta; retaining beta0",
                       extra={"beta0": beta0, "samples": len(data)})
        return beta0
    folds = _prepare_folds(data, min(cfg.folds, len(data)), rng)
    seed = int(rng.integers(2 ** 32))

    def evaluate(betas: np.ndarray) -> np.ndarray:
        return np.array([
            average_score(_fold_scores(folds, beta, model, em, seed, i, scale))
            for i, beta in enumerate(betas)
        ])

    result = search_beta(beta0, cfg, evaluate)
    logger.info(
        "Cross-validated beta",
        extra={"beta0": beta0, "beta_star": result.beta_star, "passes": len(result.passes),
               "fell_back": result.fell_back},
    )
    return result.beta_star


def crossvalidate_model(data: Dataset, spec: BoltzmannSpec, candidates: Sequence[ModelSpec], K: int,
                        rng: np.random.Generator, em: Optional[EmConfig] = None,
                        scale: float = 1.0) -> ModelSpec:
    """Candidate with the lowest fold-averaged g_hat; ties go to fewer components, then order."""
    if not candidates:
        raise InvalidArgumentError("at least one candidate model is required")
    if len(candidates) == 1:
        return candidates[0]
    if len(data) < 2:
        logger.warning("Too few samples to cross-validate the model; keeping the first candidate")
        return candidates[0]
    folds = _prepare_folds(data, min(K, len(data)), rng)
    seed = int(rng.integers(2 ** 32))
    averages = [
        average_score(_fold_scores(folds, spec.beta, model, em, seed, i, scale))
        for i, model in enumerate(candidates)
    ]
    if not np.isfinite(averages).any():
        logger.warning("All model scores undefined; keeping the first candidate",
                       extra={"beta": spec.beta})
        return candidates[0]
    best = min(range(len(candidates)),
               key=lambda i: (averages[i], candidates[i].components, i))
    logger.info(
        "Cross-validated model",
        extra={"beta": spec.beta, "scores": averages, "components": candidates[best].components},
    )
    return candidates[best]


def bagged_fit(data: Dataset, spec: BoltzmannSpec, model: ModelSpec, cfg: BaggingConfig,
               rng: np.random.Generator, em: Optional[EmConfig] = None,
               scale: float = 1.0) -> MixtureDensity:
    """Uniform average of fits to k_b bootstrap replicates of the pooled dataset."""
    n = len(data)
    if n == 0:
        raise InvalidArgumentError("dataset is empty")
    fits = []
    for replicate in range(cfg.replicates):
        for _ in range(MAX_BOOTSTRAP_REDRAWS + 1):
            resample = data.take(rng.integers(0, n, size=n))
            try:
                view = pooled_weight_view(resample, spec)
                break
            except EmptySupportError:
                logger.debug("Bootstrap replicate had no feasible samples; redrawing",
                             extra={"replicate": replicate})
        else:
            raise EmptySupportError(
                f"bootstrap replicate {replicate} had no feasible samples after "
                f"{MAX_BOOTSTRAP_REDRAWS} redraws"
            )
        fits.append(fit_model(view.points, view.weights, model, rng, em, scale))
    return uniform_mixture(fits)
