"""Named experiment presets, stored as flat config values.

Presets sit at the bottom of the precedence chain: preset < config file < flags.
"""

from typing import Dict

from .exceptions import ConfigError

_ROSENBROCK_CV = {
    "benchmark": "rosenbrock2d",
    "iterations": "20",
    "batch_size": "10",
    "schedule": "cv",
    "beta_init": "0.001",
    "k1": "0.5",
    "k2": "2",
    "n_beta": "5",
    "folds": "10",
    "max_ext_iter": "4",
    "model_candidates": "1",
}

_WOODS_CV = {
    "benchmark": "woods4d",
    "iterations": "20",
    "batch_size": "20",
    "schedule": "cv",
    "beta_init": "0.0001",
    "k1": "0.5",
    "k2": "3",
    "n_beta": "5",
    "folds": "10",
    "max_ext_iter": "4",
    "model_candidates": "1",
}

PRESETS: Dict[str, Dict[str, str]] = {
    "quadratic-fixed": {
        "benchmark": "quadratic2d",
        "iterations": "6",
        "batch_size": "30",
        "schedule": "fixed",
        "beta": "5",
        "model_candidates": "1",
    },
    "quadratic-anneal": {
        "benchmark": "quadratic2d",
        "iterations": "6",
        "batch_size": "30",
        "schedule": "multiplicative",
        "beta_init": "10",
        "k_beta": "1.5",
        "model_candidates": "1",
    },
    "rosenbrock-cv": _ROSENBROCK_CV,
    "woods-cv": _WOODS_CV,
    # Phase one runs (or reads from --prior) woods-cv; phase two re-runs with the
    # multiplicative schedule fitted to log(beta).
    "woods-bestfit": _WOODS_CV,
    "rosenbrock-bagging": {
        **_ROSENBROCK_CV,
        "batch_size": "20",
        "bagging_replicates": "5",
        "noise": "0.25",
    },
    "rosenbrock-modelcv": {
        **_ROSENBROCK_CV,
        "batch_size": "20",
        "model_candidates": "1,2,3",
    },
}

TWO_PHASE_PRESETS = frozenset({"woods-bestfit"})


def get_preset(name: str) -> Dict[str, str]:
    try:
        values = dict(PRESETS[name])
    except KeyError:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    values["preset"] = name
    return values
