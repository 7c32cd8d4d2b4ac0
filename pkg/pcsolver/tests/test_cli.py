import logging

import pandas as pd
import pytest

from pcsolver import cli, optimizer
from pcsolver.cli import build_parser, main, resolve_config
from pcsolver.config import read_flat_config
from pcsolver.exceptions import DegenerateDesignError, FactorizationError
from pcsolver.reporting import (
    CSV_COLUMNS,
    RUN_STATUS_COLUMNS,
    read_beta_histories,
    runs_path,
    sidecar_path,
    solutions_path,
)

SMALL_RUN = """
benchmark = quadratic2d
iterations = 2
batch_size = 10
schedule = fixed
beta = 5
diagnostic_samples = 50
runs = 2
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_RUN)
    return path


def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().out


def test_run_writes_csv_sidecar_and_summary(small_config, tmp_path, capsys):
    out = tmp_path / "out" / "small.csv"
    code = main(["run", "--config", str(small_config), "--out", str(out), "--workers", "1"])
    assert code == 0
    frame = pd.read_csv(out)
    assert tuple(frame.columns) == CSV_COLUMNS
    assert len(frame) == 4
    assert frame["oracle_calls"].tolist() == [10, 20, 10, 20]
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    assert summary.startswith("runs=2 completed=2 ")
    assert "oracle_calls=40" in summary
    sidecar = read_flat_config(sidecar_path(out))
    assert sidecar["beta"] == "5.0"
    assert sidecar["runs"] == "2"


def test_identical_invocations_write_identical_csv(small_config, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        assert main(["run", "--config", str(small_config), "--out", str(out), "--workers", "1"]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_solutions_file(small_config, tmp_path):
    out = tmp_path / "sol.csv"
    assert main(["run", "--config", str(small_config), "--out", str(out), "--solutions", "5",
                 "--workers", "1"]) == 0
    solutions = pd.read_csv(solutions_path(out))
    assert list(solutions.columns) == ["run_id", "index", "x1", "x2", "g"]
    assert len(solutions) == 10
    assert (solutions[["x1", "x2"]].abs() < 1.0).all().all()


def test_flags_override_file(small_config, tmp_path):
    args = build_parser().parse_args(["run", "--config", str(small_config), "--seed", "9", "--runs", "3",
                                      "--out", str(tmp_path / "x.csv")])
    cfg = resolve_config(args)
    assert cfg.run.seed == 9
    assert cfg.runs == 3
    assert cfg.run.iterations == 2


def test_preset_sidecar_echoes_parameters(tmp_path):
    args = build_parser().parse_args(["run", "--preset", "rosenbrock-bagging", "--out", str(tmp_path / "b.csv")])
    cfg = resolve_config(args)
    assert cfg.run.bagging.replicates == 5
    assert cfg.run.noise == 0.25
    assert cfg.run.batch_size == 20
    assert cfg.preset == "rosenbrock-bagging"


def test_default_output_directory(monkeypatch, tmp_path):
    monkeypatch.setenv("PC_OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("PC_WORKERS", "3")
    cfg = resolve_config(build_parser().parse_args(["run", "--preset", "quadratic-fixed"]))
    assert cfg.out == tmp_path / "results" / "quadratic-fixed.csv"
    assert cfg.workers == 3


def test_run_needs_preset_or_config(capsys):
    assert main(["run"]) == 2
    assert "preset" in capsys.readouterr().err


def test_bad_config_key_exits_with_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text(SMALL_RUN + "temperature = 3\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "bad.csv")]) == 2
    assert "temperature" in capsys.readouterr().err


def test_prior_file_feeds_best_fit_schedule(tmp_path, capsys):
    prior = tmp_path / "prior.csv"
    rows = [{"run_id": r, "iteration": t + 1, "oracle_calls": 20 * (t + 1), "beta": 1e-4 * 1.5 ** t,
             "model_components": 1, "e_qg": "", "kl_pq": "", "best_g": 1.0}
            for r in range(2) for t in range(3)]
    pd.DataFrame(rows).to_csv(prior, index=False)
    assert read_beta_histories(prior)[0] == pytest.approx([1e-4, 1.5e-4, 2.25e-4])

    config = tmp_path / "bestfit.cfg"
    config.write_text("preset = woods-bestfit\niterations = 2\ndiagnostic_samples = 20\n")
    out = tmp_path / "bestfit.csv"
    code = main(["run", "--config", str(config), "--prior", str(prior), "--out", str(out), "--workers", "1"])
    assert code == 0
    frame = pd.read_csv(out)
    assert frame["beta"].iloc[0] == pytest.approx(1e-4, rel=1e-6)
    assert frame["beta"].iloc[1] == pytest.approx(1.5e-4, rel=1e-6)
    assert read_flat_config(sidecar_path(out))["schedule"] == "multiplicative"


def test_risk_demo_table(capsys):
    assert main(["risk-demo", "--mu1", "0", "--mu2", "1", "--sigma-b", "0.5", "--l1", "1", "--l2", "2",
                 "--n", "20000"]) == 0
    out = capsys.readouterr().out
    assert "P(choose phi1)" in out
    assert "risk" in out


def test_fbmc_demo_table(capsys):
    assert main(["fbmc-demo", "--n-fictitious", "500"]) == 0
    out = capsys.readouterr().out
    assert "fit-based" in out
    assert "quadrature" in out


def test_fbmc_demo_rejects_unboxed_benchmark(capsys):
    assert main(["fbmc-demo", "--benchmark", "woods4d"]) == 2


def test_elite_demo_selects_a_candidate(capsys):
    assert main(["elite-demo", "--K", "2", "--n-tuples", "200"]) == 0
    assert "selected:" in capsys.readouterr().out


def test_elite_demo_rejects_zero_k():
    assert main(["elite-demo", "--K", "0"]) == 2


def _failing_fit_model(monkeypatch, error, on_call=2):
    calls = {"n": 0}
    real = optimizer.fit_model

    def fit_model(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == on_call:
            raise error
        return real(*args, **kwargs)

    monkeypatch.setattr(optimizer, "fit_model", fit_model)


def test_failed_run_keeps_its_completed_iterations(small_config, tmp_path, monkeypatch, capsys):
    _failing_fit_model(monkeypatch, FactorizationError("covariance is not factorizable"))
    out = tmp_path / "partial.csv"
    assert main(["run", "--config", str(small_config), "--out", str(out), "--workers", "1"]) == 1
    frame = pd.read_csv(out)
    assert frame[["run_id", "iteration"]].values.tolist() == [[0, 1], [1, 1], [1, 2]]
    status = pd.read_csv(runs_path(out))
    assert tuple(status.columns) == RUN_STATUS_COLUMNS
    assert status["status"].tolist() == ["failed", "completed"]
    assert status["iterations"].tolist() == [1, 2]
    assert status["stop_reason"].iloc[0] == "error"
    assert "factorizable" in status["error"].iloc[0]
    assert "completed=1" in capsys.readouterr().out


def test_unexpected_error_still_writes_other_runs(small_config, tmp_path, monkeypatch):
    _failing_fit_model(monkeypatch, RuntimeError("boom"))
    out = tmp_path / "crash.csv"
    assert main(["run", "--config", str(small_config), "--out", str(out), "--workers", "1"]) == 1
    frame = pd.read_csv(out)
    assert frame["run_id"].tolist() == [1, 1]
    status = pd.read_csv(runs_path(out))
    assert status["status"].tolist() == ["crashed", "completed"]
    assert "boom" in status["error"].iloc[0]


def test_completed_runs_are_listed_in_the_status_file(small_config, tmp_path):
    out = tmp_path / "ok.csv"
    assert main(["run", "--config", str(small_config), "--out", str(out), "--workers", "1"]) == 0
    status = pd.read_csv(runs_path(out))
    assert status["status"].tolist() == ["completed", "completed"]
    assert status["oracle_calls"].tolist() == [20, 20]


def test_best_fit_phase_logs_both_schedule_fits(tmp_path, caplog):
    prior = tmp_path / "prior.csv"
    rows = [{"run_id": r, "iteration": t + 1, "beta": 1e-4 + 2e-4 * t} for r in range(2) for t in range(3)]
    pd.DataFrame(rows).to_csv(prior, index=False)
    config = tmp_path / "bestfit.cfg"
    config.write_text("preset = woods-bestfit\niterations = 1\nruns = 1\ndiagnostics = false\n")
    caplog.set_level(logging.INFO, logger="pcsolver.cli")
    assert main(["run", "--config", str(config), "--prior", str(prior),
                 "--out", str(tmp_path / "bf.csv"), "--workers", "1"]) == 0
    fitted = [r for r in caplog.records if r.getMessage() == "Fitted beta schedules"]
    assert len(fitted) == 1
    assert fitted[0].linear_intercept == pytest.approx(1e-4)
    assert fitted[0].linear_slope == pytest.approx(2e-4)


def test_fbmc_demo_degenerate_design_is_a_usage_error(monkeypatch, capsys):
    def degenerate(points, values):
        raise DegenerateDesignError("quadratic design has rank 5 < 6")

    monkeypatch.setattr(cli, "fit_surface", degenerate)
    assert main(["fbmc-demo", "--n-factual", "6"]) == 2
    assert "quadratic fit" in capsys.readouterr().err


def test_fbmc_demo_too_few_factual_samples():
    assert main(["fbmc-demo", "--n-factual", "3"]) == 2
