"""Immediate-sampling PC main loop."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    CrossValidatedSchedule,
    FixedSchedule,
    ModelSpec,
    MultiplicativeSchedule,
    RunConfig,
)
from .constrained import FeasibilityMask, sample_masked_many
from .density import Density, UniformBoxDensity
from .estimator import DiagnosticEstimate, expected_g_diagnostic, kl_pq_diagnostic
from .exceptions import (
    EmptySupportError,
    InvalidArgumentError,
    PCError,
    RunAbortedError,
    SamplerExhaustedError,
    UndefinedScoreError,
)
from .oracle import Benchmark, OracleHandle
from .schedule import bagged_fit, crossvalidate_beta, crossvalidate_model, fit_model
from .target import BoltzmannSpec, Dataset, pooled_weight_view

logger = logging.getLogger(__name__)

MAX_WIDENINGS = 3


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    beta: float
    density: Density
    model: ModelSpec
    e_qg: Optional[DiagnosticEstimate]
    kl_pq: Optional[DiagnosticEstimate]
    oracle_calls: int
    best_g: float
    widened: bool = False


@dataclass
class RunHistory:
    config: RunConfig
    benchmark: Benchmark
    dataset: Dataset
    records: List[IterationRecord] = field(default_factory=list)
    aborted: bool = False
    stop_reason: Optional[str] = None
    error: Optional[str] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def oracle_calls(self) -> int:
        return self.records[-1].oracle_calls if self.records else 0

    @property
    def final_density(self) -> Density:
        if not self.records:
            raise InvalidArgumentError("run history has no iterations")
        return self.records[-1].density

    @property
    def betas(self) -> List[float]:
        return [r.beta for r in self.records]


def _next_beta(cfg: RunConfig, iteration: int, previous: Optional[float], data: Dataset,
               model: ModelSpec, rng: np.random.Generator, scale: float) -> float:
    schedule = cfg.schedule
    if isinstance(schedule, FixedSchedule):
        return schedule.beta
    if iteration == 1:
        return schedule.beta_init
    if isinstance(schedule, MultiplicativeSchedule):
        return previous * schedule.k_beta
    if isinstance(schedule, CrossValidatedSchedule):
        return crossvalidate_beta(data, previous, schedule.cv, model, rng, cfg.em, scale)
    raise InvalidArgumentError(f"Unsupported schedule: {schedule!r}")


def _fit(cfg: RunConfig, data: Dataset, spec: BoltzmannSpec, model: ModelSpec,
         rng: np.random.Generator, scale: float) -> Density:
    if cfg.bagging is not None:
        return bagged_fit(data, spec, model, cfg.bagging, rng, cfg.em, scale)
    view = pooled_weight_view(data, spec)
    return fit_model(view.points, view.weights, model, rng, cfg.em, scale)


def _diagnostics(cfg: RunConfig, spec: BoltzmannSpec, oracle: OracleHandle, density: Density,
                 rng: np.random.Generator, iteration: int):
    if not cfg.diagnostics:
        return None, None
    try:
        e_qg = expected_g_diagnostic(density, oracle, cfg.diagnostic_samples, rng)
    except UndefinedScoreError:
        logger.warning("E_q[G] undefined: every diagnostic draw was infeasible",
                       extra={"iteration": iteration})
        e_qg = None
    kl = None
    benchmark = oracle.benchmark
    if benchmark.dimension == 2 and benchmark.box is not None:
        try:
            kl = kl_pq_diagnostic(spec, oracle, density, cfg.diagnostic_samples, rng)
        except SamplerExhaustedError as exc:
            logger.warning("KL diagnostic skipped", extra={"iteration": iteration, "reason": str(exc)})
    return e_qg, kl


def run(cfg: RunConfig, oracle: Optional[OracleHandle] = None) -> RunHistory:
    """Run T iterations: draw from h, query, reweight the pooled data, refit, h <- fit.

    A PCError part-way through is re-raised as RunAbortedError carrying the
    iterations completed so far.
    """
    oracle = oracle if oracle is not None else OracleHandle(cfg.benchmark, noise_half_width=cfg.noise)
    benchmark = oracle.benchmark
    history = RunHistory(config=cfg, benchmark=benchmark, dataset=Dataset(benchmark.dimension))
    try:
        _iterate(cfg, oracle, history)
    except PCError as exc:
        history.aborted = True
        history.stop_reason = "error"
        history.error = str(exc)
        logger.error("Run aborted", extra={"iterations": len(history), "error": str(exc)})
        raise RunAbortedError(f"run aborted after {len(history)} iterations: {exc}", history) from exc
    return history


def _iterate(cfg: RunConfig, oracle: OracleHandle, history: RunHistory) -> None:
    benchmark = oracle.benchmark
    search_seed, diagnostic_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(search_seed)
    diagnostic_rng = np.random.default_rng(diagnostic_seed)
    scale = benchmark.init_box.half_width

    data = history.dataset
    h: Density = UniformBoxDensity(benchmark.init_box)
    model = cfg.model.candidates[0]
    beta: Optional[float] = None
    widenings = 0

    for iteration in range(1, cfg.iterations + 1):
        if cfg.max_oracle_calls is not None and oracle.call_count + cfg.batch_size > cfg.max_oracle_calls:
            history.stop_reason = "budget"
            logger.info("Oracle budget reached; stopping",
                        extra={"iteration": iteration, "oracle_calls": oracle.call_count,
                               "max_oracle_calls": cfg.max_oracle_calls})
            break

        points = h.sample(rng, size=cfg.batch_size)
        log_h = np.atleast_1d(h.logpdf(points))
        g, _ = oracle.query_many(points, rng)
        data.append_batch(points, g, log_h)

        beta = _next_beta(cfg, iteration, beta, data, model, rng, scale)
        spec = BoltzmannSpec(beta)
        widened = False
        try:
            if not cfg.model.is_fixed:
                model = crossvalidate_model(data, spec, cfg.model.candidates, cfg.model.folds,
                                            rng, cfg.em, scale)
            density = _fit(cfg, data, spec, model, rng, scale)
            widenings = 0
        except EmptySupportError:
            widenings += 1
            if widenings > MAX_WIDENINGS:
                history.aborted = True
                history.stop_reason = "empty-support"
                logger.error("No feasible samples after repeated widening; aborting run",
                             extra={"iteration": iteration, "widenings": MAX_WIDENINGS})
                break
            density = h.widened(2.0)
            widened = True
            logger.warning("No feasible samples to fit; widening h",
                           extra={"iteration": iteration, "widenings": widenings})

        e_qg, kl = _diagnostics(cfg, spec, oracle, density, diagnostic_rng, iteration)
        record = IterationRecord(
            iteration=iteration,
            beta=beta,
            density=density,
            model=model,
            e_qg=e_qg,
            kl_pq=kl,
            oracle_calls=oracle.call_count,
            best_g=data.best_g(),
            widened=widened,
        )
        history.records.append(record)
        logger.info(
            "Iteration complete",
            extra={"iteration": iteration, "beta": beta, "components": model.components,
                   "oracle_calls": record.oracle_calls, "best_g": record.best_g,
                   "e_qg": None if e_qg is None else e_qg.value},
        )
        h = density


def final_solutions(history: RunHistory, n: int, rng: np.random.Generator,
                    max_rejects: int = 10 ** 5) -> List[np.ndarray]:
    """n draws from the final fitted density, rejected against the benchmark box."""
    if n < 0:
        raise InvalidArgumentError(f"n must be >= 0, got {n}")
    if not history.records:
        raise InvalidArgumentError("run history has no iterations")
    if n == 0:
        return []
    box = history.benchmark.box
    mask = FeasibilityMask.box(box) if box is not None else FeasibilityMask.always()
    return list(sample_masked_many(history.final_density, mask, rng, n, max_rejects))


def _schedule_columns(beta_histories: Sequence[Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
    steps, betas = [], []
    for trajectory in beta_histories:
        for t, beta in enumerate(trajectory):
            steps.append(t)
            betas.append(beta)
    steps = np.asarray(steps, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if np.unique(steps).size < 2:
        raise InvalidArgumentError("need beta values from at least two iterations")
    return steps, betas


def fit_multiplicative_schedule(beta_histories: Sequence[Sequence[float]]) -> Tuple[float, float]:
    """Least-squares fit of log beta_t = a + b (t-1); returns (beta_init, k_beta) = (e^a, e^b)."""
    steps, betas = _schedule_columns(beta_histories)
    if np.any(betas <= 0):
        raise InvalidArgumentError("beta values must be positive to fit log(beta)")
    slope, intercept = np.polyfit(steps, np.log(betas), 1)
    return float(np.exp(intercept)), float(np.exp(slope))


def fit_linear_schedule(beta_histories: Sequence[Sequence[float]]) -> Tuple[float, float]:
    """Least-squares fit of beta_t = a + b (t-1); returns (a, b)."""
    steps, betas = _schedule_columns(beta_histories)
    slope, intercept = np.polyfit(steps, betas, 1)
    return float(intercept), float(slope)
