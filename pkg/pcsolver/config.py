"""Typed configuration models and the flat `key = value` config format."""

import logging
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

BenchmarkId = Literal["quadratic2d", "rosenbrock2d", "woods4d"]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class EmConfig(_Frozen):
    max_iters: int = Field(200, ge=1)
    tol: float = Field(1e-8, gt=0)
    n_restarts: int = Field(5, ge=1)
    init: Literal["weighted-points"] = "weighted-points"


class BetaCvConfig(_Frozen):
    k1: float = Field(0.5, gt=0, lt=1)
    k2: float = Field(2.0, gt=1)
    n_beta: int = Field(5, ge=3)
    folds: int = Field(10, ge=2)
    max_ext_iter: int = Field(4, ge=0)


class ModelSpec(_Frozen):
    family: Literal["single-gaussian", "mixture"] = "single-gaussian"
    components: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _single_has_one_component(self):
        if self.family == "single-gaussian" and self.components != 1:
            raise ValueError("single-gaussian models have exactly one component")
        return self

    @classmethod
    def with_components(cls, m: int) -> "ModelSpec":
        return cls() if m == 1 else cls(family="mixture", components=m)


class BaggingConfig(_Frozen):
    replicates: int = Field(5, ge=1)


class FixedSchedule(_Frozen):
    kind: Literal["fixed"] = "fixed"
    beta: float = Field(..., ge=0)


class MultiplicativeSchedule(_Frozen):
    kind: Literal["multiplicative"] = "multiplicative"
    beta_init: float = Field(..., gt=0)
    k_beta: float = Field(..., gt=1)


class CrossValidatedSchedule(_Frozen):
    kind: Literal["cv"] = "cv"
    beta_init: float = Field(..., gt=0)
    cv: BetaCvConfig = BetaCvConfig()


Schedule = Annotated[
    Union[FixedSchedule, MultiplicativeSchedule, CrossValidatedSchedule],
    Field(discriminator="kind"),
]


class ModelPolicy(_Frozen):
    """A single candidate means a fixed model; several are chosen by cross-validation."""

    candidates: List[ModelSpec] = Field(default_factory=lambda: [ModelSpec()], min_length=1)
    folds: int = Field(10, ge=2)

    @property
    def is_fixed(self) -> bool:
        return len(self.candidates) == 1


class RunConfig(_Frozen):
    benchmark: BenchmarkId
    iterations: int = Field(..., ge=1)
    batch_size: int = Field(..., ge=1)
    schedule: Schedule
    model: ModelPolicy = ModelPolicy()
    bagging: Optional[BaggingConfig] = None
    noise: float = Field(0.0, ge=0)
    seed: int = 0
    diagnostics: bool = True
    diagnostic_samples: int = Field(1000, ge=1)
    max_oracle_calls: Optional[int] = Field(None, ge=1)
    em: EmConfig = EmConfig()


class ExperimentConfig(_Frozen):
    run: RunConfig
    runs: int = Field(1, ge=1)
    out: Path = Path("results/run.csv")
    preset: Optional[str] = None
    workers: int = Field(1, ge=1)
    solutions: int = Field(0, ge=0)
    prior: Optional[Path] = None


FLAT_KEYS = (
    "preset", "benchmark", "iterations", "batch_size", "schedule", "beta", "beta_init",
    "k_beta", "k1", "k2", "n_beta", "folds", "max_ext_iter", "model_candidates",
    "bagging_replicates", "noise", "seed", "diagnostics", "diagnostic_samples",
    "max_oracle_calls", "em_max_iters", "em_tol", "em_restarts", "runs", "out",
    "workers", "solutions", "prior",
)

# pydantic field name -> flat key, used to name the offending key on errors
_FIELD_TO_KEY = {
    "n_restarts": "em_restarts", "max_iters": "em_max_iters", "tol": "em_tol",
    "replicates": "bagging_replicates", "candidates": "model_candidates",
    "components": "model_candidates", "family": "model_candidates",
    "kind": "schedule",
}

_INT_KEYS = {"iterations", "batch_size", "n_beta", "folds", "max_ext_iter", "bagging_replicates",
             "seed", "diagnostic_samples", "max_oracle_calls", "em_max_iters", "em_restarts",
             "runs", "workers", "solutions"}
_FLOAT_KEYS = {"beta", "beta_init", "k_beta", "k1", "k2", "noise", "em_tol"}
_NONE_VALUES = {"", "none", "off"}


def parse_flat_config(text: str, source: str = "<config>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FLAT_KEYS:
            raise ConfigError(key, "unknown configuration key")
        values[key] = value
    return values


def read_flat_config(path: Path) -> Dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    return parse_flat_config(text, source=str(path))


def _convert(key: str, value: str):
    if key in _INT_KEYS:
        if key == "max_oracle_calls" and value.lower() in _NONE_VALUES:
            return None
        try:
            return int(value)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {value!r}") from None
    if key in _FLOAT_KEYS:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {value!r}") from None
    if key == "diagnostics":
        lowered = value.lower()
        if lowered not in {"true", "false", "1", "0", "yes", "no", "on", "off"}:
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return lowered in {"true", "1", "yes", "on"}
    if key == "model_candidates":
        try:
            return [int(part) for part in value.split(",") if part.strip()]
        except ValueError:
            raise ConfigError(key, f"expected comma-separated component counts, got {value!r}") from None
    return value


def build_experiment_config(flat: Dict[str, str]) -> ExperimentConfig:
    """Assemble an ExperimentConfig from flat string values."""
    unknown = sorted(set(flat) - set(FLAT_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    v = {key: _convert(key, value) for key, value in flat.items()}

    for required in ("benchmark", "iterations", "batch_size", "schedule"):
        if required not in v:
            raise ConfigError(required, "missing required key")

    schedule_kind = v["schedule"]
    try:
        if schedule_kind == "fixed":
            schedule = FixedSchedule(beta=_require(v, "beta"))
        elif schedule_kind == "multiplicative":
            schedule = MultiplicativeSchedule(beta_init=_require(v, "beta_init"),
                                              k_beta=_require(v, "k_beta"))
        elif schedule_kind == "cv":
            cv_fields = {f: v[f] for f in ("k1", "k2", "n_beta", "folds") if f in v}
            if "max_ext_iter" in v:
                cv_fields["max_ext_iter"] = v["max_ext_iter"]
            schedule = CrossValidatedSchedule(beta_init=_require(v, "beta_init"),
                                              cv=BetaCvConfig(**cv_fields))
        else:
            raise ConfigError("schedule", f"expected fixed, multiplicative or cv, got {schedule_kind!r}")

        candidates = [ModelSpec.with_components(m) for m in v.get("model_candidates", [1])]
        if not candidates:
            raise ConfigError("model_candidates", "at least one candidate is required")
        model = ModelPolicy(candidates=candidates, folds=v.get("folds", 10))

        replicates = v.get("bagging_replicates", 0)
        bagging = BaggingConfig(replicates=replicates) if replicates else None

        em_fields = {}
        for flat_key, field_name in (("em_max_iters", "max_iters"), ("em_tol", "tol"),
                                     ("em_restarts", "n_restarts")):
            if flat_key in v:
                em_fields[field_name] = v[flat_key]

        run_fields = {f: v[f] for f in ("noise", "seed", "diagnostics", "diagnostic_samples",
                                        "max_oracle_calls") if f in v}
        run = RunConfig(
            benchmark=v["benchmark"],
            iterations=v["iterations"],
            batch_size=v["batch_size"],
            schedule=schedule,
            model=model,
            bagging=bagging,
            em=EmConfig(**em_fields),
            **run_fields,
        )
        exp_fields = {f: v[f] for f in ("runs", "out", "preset", "workers", "solutions", "prior")
                      if f in v}
        return ExperimentConfig(run=run, **exp_fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        field_name = next((str(p) for p in reversed(first["loc"]) if isinstance(p, str)), "config")
        raise ConfigError(_FIELD_TO_KEY.get(field_name, field_name), first["msg"]) from None


def _require(values: dict, key: str):
    if key not in values:
        raise ConfigError(key, "missing required key for this schedule")
    return values[key]


def flatten_experiment_config(cfg: ExperimentConfig) -> Dict[str, str]:
    """Inverse of build_experiment_config; values are strings."""
    run = cfg.run
    flat: Dict[str, str] = {}
    if cfg.preset:
        flat["preset"] = cfg.preset
    flat.update(benchmark=run.benchmark, iterations=str(run.iterations),
                batch_size=str(run.batch_size), schedule=run.schedule.kind)
    schedule = run.schedule
    if isinstance(schedule, FixedSchedule):
        flat["beta"] = repr(schedule.beta)
    elif isinstance(schedule, MultiplicativeSchedule):
        flat.update(beta_init=repr(schedule.beta_init), k_beta=repr(schedule.k_beta))
    else:
        flat.update(beta_init=repr(schedule.beta_init), k1=repr(schedule.cv.k1),
                    k2=repr(schedule.cv.k2), n_beta=str(schedule.cv.n_beta),
                    folds=str(schedule.cv.folds), max_ext_iter=str(schedule.cv.max_ext_iter))
    flat.setdefault("folds", str(run.model.folds))
    flat["model_candidates"] = ",".join(str(m.components) for m in run.model.candidates)
    flat["bagging_replicates"] = str(run.bagging.replicates if run.bagging else 0)
    flat.update(
        noise=repr(run.noise), seed=str(run.seed), diagnostics=str(run.diagnostics).lower(),
        diagnostic_samples=str(run.diagnostic_samples),
        max_oracle_calls="none" if run.max_oracle_calls is None else str(run.max_oracle_calls),
        em_max_iters=str(run.em.max_iters), em_tol=repr(run.em.tol),
        em_restarts=str(run.em.n_restarts), runs=str(cfg.runs), out=str(cfg.out),
        workers=str(cfg.workers), solutions=str(cfg.solutions),
    )
    if cfg.prior is not None:
        flat["prior"] = str(cfg.prior)
    return flat


def format_flat_config(flat: Dict[str, str]) -> str:
    return "".join(f"{key} = {value}\n" for key, value in flat.items())
