"""Command-line entry point: experiment runs and the demo subcommands."""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from joblib import Parallel, delayed
from pydantic import ValidationError

from .config import (
    ExperimentConfig,
    MultiplicativeSchedule,
    RunConfig,
    build_experiment_config,
    read_flat_config,
)
from .density import GaussianDensity, UniformBoxDensity
from .estimator import boltzmann_grid, importance_estimate
from .exceptions import ConfigError, DegenerateDesignError, InvalidArgumentError, PCError, RunAbortedError
from .fbmc import NoiseKernel, elite_scores, fb_integral_estimate, fit_surface, surface_minimum
from .oracle import ROSENBROCK, OracleHandle, get_benchmark
from .optimizer import RunHistory, final_solutions, fit_linear_schedule, fit_multiplicative_schedule, run
from .presets import PRESETS, TWO_PHASE_PRESETS, get_preset
from .reporting import (
    histories_frame,
    read_beta_histories,
    run_status_frame,
    runs_path,
    solutions_frame,
    solutions_path,
    write_csv,
    write_sidecar,
)
from .risk import TwoPhiModel, mc_validate, prob_choose_phi1, risk_two_phi

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    run_id: int
    history: Optional[RunHistory]
    solutions: List[np.ndarray] = field(default_factory=list)
    solution_values: List[float] = field(default_factory=list)
    error: Optional[str] = None
    exception: Optional[BaseException] = None

    @property
    def status(self) -> str:
        if self.exception is not None:
            return "crashed"
        if self.error is not None:
            return "failed"
        if self.history is None or self.history.aborted:
            return "aborted"
        return "completed"

    @property
    def completed(self) -> bool:
        return self.status == "completed"


def execute_run(run_cfg: RunConfig, run_id: int, n_solutions: int = 0) -> RunOutcome:
    """One seeded run; run_id i uses seed + i."""
    cfg = run_cfg.model_copy(update={"seed": run_cfg.seed + run_id})
    try:
        history = run(cfg)
    except RunAbortedError as exc:
        logger.error("Run failed", extra={"run_id": run_id, "iterations": len(exc.history), "error": str(exc)})
        return RunOutcome(run_id, exc.history, error=str(exc))
    except PCError as exc:
        logger.error("Run failed", extra={"run_id": run_id, "error": str(exc)})
        return RunOutcome(run_id, None, error=str(exc))
    except Exception as exc:
        logger.exception("Run crashed", extra={"run_id": run_id})
        return RunOutcome(run_id, None, error=repr(exc), exception=exc)
    outcome = RunOutcome(run_id, history)
    if n_solutions and history.records:
        try:
            rng = np.random.default_rng([cfg.seed, run_id, n_solutions])
            points = final_solutions(history, n_solutions, rng)
            outcome.solutions = points
            outcome.solution_values = history.benchmark.evaluate_many(np.array(points)).tolist()
        except PCError as exc:
            outcome.error = str(exc)
    return outcome


def run_sweep(run_cfg: RunConfig, runs: int, workers: int = 1, n_solutions: int = 0) -> List[RunOutcome]:
    outcomes = Parallel(n_jobs=workers)(
        delayed(execute_run)(run_cfg, run_id, n_solutions) for run_id in range(runs)
    )
    return sorted(outcomes, key=lambda o: o.run_id)


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge preset < config file < flags into an ExperimentConfig."""
    file_values: Dict[str, str] = read_flat_config(args.config) if args.config else {}
    preset = args.preset or file_values.get("preset")
    if not preset and not args.config:
        raise ConfigError("preset", "give --preset or --config")

    flat: Dict[str, str] = get_preset(preset) if preset else {}
    flat.update(file_values)
    if args.preset:
        flat["preset"] = args.preset
    for key in ("seed", "runs", "out", "workers", "solutions", "prior"):
        value = getattr(args, key)
        if value is not None:
            flat[key] = str(value)

    if "out" not in flat:
        output_dir = os.environ.get("PC_OUTPUT_DIR") or "results"
        flat["out"] = str(Path(output_dir) / f"{flat.get('preset') or 'run'}.csv")
    if "workers" not in flat:
        flat["workers"] = os.environ.get("PC_WORKERS") or "1"
    return build_experiment_config(flat)


def _best_fit_schedule(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.prior is not None:
        beta_histories = read_beta_histories(cfg.prior)
    else:
        logger.info("Running cross-validated phase for the best-fit schedule",
                    extra={"runs": cfg.runs})
        outcomes = run_sweep(cfg.run, cfg.runs, cfg.workers)
        write_csv(histories_frame((o.run_id, o.history) for o in outcomes if o.history),
                  cfg.out.with_suffix(".cv.csv"))
        beta_histories = [o.history.betas for o in outcomes if o.history and o.history.records]
    beta_init, k_beta = fit_multiplicative_schedule(beta_histories)
    intercept, slope = fit_linear_schedule(beta_histories)
    logger.info("Fitted beta schedules",
                extra={"beta_init": beta_init, "k_beta": k_beta,
                       "linear_intercept": intercept, "linear_slope": slope})
    try:
        schedule = MultiplicativeSchedule(beta_init=beta_init, k_beta=k_beta)
    except ValidationError:
        raise ConfigError("k_beta", f"fitted k_beta = {k_beta:.6g} is not > 1") from None
    return cfg.model_copy(update={"run": cfg.run.model_copy(update={"schedule": schedule})})


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if cfg.preset in TWO_PHASE_PRESETS:
        cfg = _best_fit_schedule(cfg)

    outcomes = run_sweep(cfg.run, cfg.runs, cfg.workers, cfg.solutions)
    frame = histories_frame((o.run_id, o.history) for o in outcomes if o.history is not None)
    write_csv(frame, cfg.out)
    write_sidecar(cfg, cfg.out)
    write_csv(run_status_frame((o.run_id, o.status, o.history, o.error) for o in outcomes),
              runs_path(cfg.out))
    if cfg.solutions:
        dimension = get_benchmark(cfg.run.benchmark).dimension
        write_csv(solutions_frame(((o.run_id, o.solutions, o.solution_values) for o in outcomes),
                                  dimension), solutions_path(cfg.out))

    finals = frame.sort_values("iteration").groupby("run_id").tail(1)["e_qg"].dropna()
    median = float(finals.median()) if len(finals) else float("nan")
    total_calls = sum(o.history.oracle_calls for o in outcomes if o.history is not None)
    completed = sum(o.completed for o in outcomes)
    print(f"runs={cfg.runs} completed={completed} median_final_e_qg={median:.9g} "
          f"oracle_calls={total_calls} csv={cfg.out}")
    crashed = next((o.exception for o in outcomes if o.exception is not None), None)
    if crashed is not None:
        raise crashed
    return 0 if completed == cfg.runs else 1


def cmd_risk_demo(args: argparse.Namespace) -> int:
    model = TwoPhiModel(mu=[args.mu1, args.mu2], sigma_a=args.sigma_a, sigma_b=args.sigma_b,
                        true_losses=[args.l1, args.l2])
    mc = mc_validate(model, args.n, np.random.default_rng(args.seed))
    frame = pd.DataFrame(
        [
            {"quantity": "P(choose phi1)", "analytic": prob_choose_phi1(model),
             "monte_carlo": mc.prob_phi1, "standard_error": mc.prob_phi1_se},
            {"quantity": "risk", "analytic": risk_two_phi(model),
             "monte_carlo": mc.risk, "standard_error": mc.risk_se},
        ]
    )
    print(frame.to_markdown(index=False, floatfmt=".6g"))
    return 0


def _usable_surface(points, g):
    try:
        return fit_surface(points, g)
    except DegenerateDesignError as exc:
        raise InvalidArgumentError(f"{len(g)} factual samples do not support a quadratic fit: {exc}") from exc


def cmd_fbmc_demo(args: argparse.Namespace) -> int:
    benchmark = get_benchmark(args.benchmark)
    if benchmark.dimension != 2 or benchmark.box is None:
        raise InvalidArgumentError(f"fbmc-demo needs a 2-D boxed benchmark, got {benchmark.id}")
    rng = np.random.default_rng(args.seed)
    uniform = UniformBoxDensity(benchmark.box)
    oracle = OracleHandle(benchmark)
    points = uniform.sample(rng, size=args.n_factual)
    g, _ = oracle.query_many(points, rng)
    log_h = uniform.logpdf(points)

    truth = boltzmann_grid(benchmark, 0.0).expected_g
    plain = importance_estimate(points, g, log_h, uniform)
    fit = _usable_surface(points, g)
    fit_based = fb_integral_estimate(fit, uniform, args.n_fictitious, rng)
    frame = pd.DataFrame(
        [
            {"estimator": "importance sampling", "estimate": plain, "abs_error": abs(plain - truth)},
            {"estimator": "fit-based", "estimate": fit_based, "abs_error": abs(fit_based - truth)},
            {"estimator": "quadrature", "estimate": truth, "abs_error": 0.0},
        ]
    )
    print(frame.to_markdown(index=False, floatfmt=".6g"))
    return 0


def cmd_elite_demo(args: argparse.Namespace) -> int:
    if args.K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {args.K}")
    benchmark = get_benchmark(ROSENBROCK)
    half_width = benchmark.box.half_width
    rng = np.random.default_rng(args.seed)
    points = UniformBoxDensity(benchmark.box).sample(rng, size=args.n_factual)
    g, _ = OracleHandle(benchmark).query_many(points, rng)
    fit = _usable_surface(points, g)
    kernel = NoiseKernel.default_for(fit, half_width)
    x_star = surface_minimum(fit, half_width)

    candidates = {
        "delta at surrogate minimum": GaussianDensity(x_star, 1e-4 * np.eye(2)),
        "narrow at surrogate minimum": GaussianDensity(x_star, 0.25 * np.eye(2)),
        "diffuse at origin": GaussianDensity(np.zeros(2), 4.0 * np.eye(2)),
    }
    scores = elite_scores(list(candidates.values()), None, fit, kernel, args.K, args.n_tuples, rng)
    frame = pd.DataFrame({"candidate": list(candidates), "elite_estimate": scores})
    print(frame.to_markdown(index=False, floatfmt=".6g"))
    finite = np.isfinite(scores)
    if not finite.any():
        print("selected: none")
        return 1
    print(f"selected: {int(np.argmin(scores))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pc-immediate",
        description="Immediate-sampling Probability Collectives experiments",
    )
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run an optimizer experiment and write a CSV")
    p_run.add_argument("--preset", choices=sorted(PRESETS))
    p_run.add_argument("--config", type=Path, help="flat key = value config file")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--runs", type=int)
    p_run.add_argument("--out", type=Path)
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--solutions", type=int, help="final-solution draws per run")
    p_run.add_argument("--prior", type=Path, help="CSV of cross-validated runs (woods-bestfit)")
    p_run.set_defaults(handler=cmd_run)

    p_risk = sub.add_parser("risk-demo", help="closed-form vs Monte Carlo two-candidate risk")
    p_risk.add_argument("--mu1", type=float, default=0.0)
    p_risk.add_argument("--mu2", type=float, default=0.0)
    p_risk.add_argument("--sigma-a", type=float, default=1.0)
    p_risk.add_argument("--sigma-b", type=float, default=1.0)
    p_risk.add_argument("--l1", type=float, default=0.0)
    p_risk.add_argument("--l2", type=float, default=1.0)
    p_risk.add_argument("--n", type=int, default=10 ** 5)
    p_risk.add_argument("--seed", type=int, default=0)
    p_risk.set_defaults(handler=cmd_risk_demo)

    p_fbmc = sub.add_parser("fbmc-demo", help="importance sampling vs fit-based integral estimate")
    p_fbmc.add_argument("--benchmark", default="quadratic2d")
    p_fbmc.add_argument("--n-factual", type=int, default=30)
    p_fbmc.add_argument("--n-fictitious", type=int, default=2000)
    p_fbmc.add_argument("--seed", type=int, default=0)
    p_fbmc.set_defaults(handler=cmd_fbmc_demo)

    p_elite = sub.add_parser("elite-demo", help="elite estimates for candidate densities")
    p_elite.add_argument("--K", type=int, default=5)
    p_elite.add_argument("--n-tuples", type=int, default=2000)
    p_elite.add_argument("--n-factual", type=int, default=60)
    p_elite.add_argument("--seed", type=int, default=0)
    p_elite.set_defaults(handler=cmd_elite_demo)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(
        level=os.environ.get("LOG_LEVEL", "INFO"),
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.handler(args)
    except InvalidArgumentError as exc:
        logger.error("Invalid arguments", extra={"command": args.command, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PCError as exc:
        logger.error("Command failed", extra={"command": args.command, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        logger.exception("Unexpected failure", extra={"command": args.command})
        return 1


if __name__ == "__main__":
    sys.exit(main())
