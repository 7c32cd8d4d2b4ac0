import numpy as np
import pytest

from pcsolver.density import GaussianDensity, UniformBoxDensity
from pcsolver.estimator import (
    boltzmann_grid,
    expected_g_diagnostic,
    holdout_performance,
    holdout_score_or_worst,
    importance_estimate,
    kl_pq_diagnostic,
    unbiased_objective_estimate,
)
from pcsolver.exceptions import InvalidArgumentError, UndefinedScoreError
from pcsolver.oracle import QUADRATIC, ROSENBROCK, WOODS, OracleHandle, get_benchmark
from pcsolver.target import BoltzmannSpec, Dataset


def _uniform_dataset(n, rng):
    benchmark = get_benchmark(QUADRATIC)
    h = UniformBoxDensity(benchmark.box)
    x = h.sample(rng, size=n)
    return Dataset.from_arrays(x, benchmark.evaluate_many(x), h.logpdf(x))


def test_holdout_with_q_equal_h_is_plain_mean():
    data = _uniform_dataset(40, np.random.default_rng(0))
    score = holdout_performance(data, UniformBoxDensity(get_benchmark(QUADRATIC).box))
    assert score.value == pytest.approx(data.g.mean())
    assert score.effective_support == 40


def test_holdout_concentrated_density_picks_that_sample():
    data = _uniform_dataset(20, np.random.default_rng(1))
    target = data.locations[7]
    q = GaussianDensity(target, 1e-6 * np.eye(2))
    assert holdout_performance(data, q).value == pytest.approx(data.g[7])


def test_holdout_without_feasible_samples_is_undefined():
    data = Dataset.from_arrays(np.array([[3.0, 3.0]]), [np.inf], [0.0])
    with pytest.raises(UndefinedScoreError):
        holdout_performance(data, GaussianDensity([0.0, 0.0], np.eye(2)))
    assert holdout_score_or_worst(data, GaussianDensity([0.0, 0.0], np.eye(2))).rank_value == np.inf


def test_holdout_invariant_to_proposal_scale_and_order():
    rng = np.random.default_rng(2)
    data = _uniform_dataset(30, rng)
    q = GaussianDensity([0.1, -0.2], np.eye(2) * 0.3)
    base = holdout_performance(data, q).value
    scaled = Dataset.from_arrays(data.locations, data.g, data.log_proposal + np.log(7.0))
    perm = rng.permutation(30)
    permuted = data.take(perm)
    assert holdout_performance(scaled, q).value == pytest.approx(base, rel=1e-12)
    assert holdout_performance(permuted, q).value == pytest.approx(base, rel=1e-12)
    assert holdout_performance(data.samples, q).value == pytest.approx(base, rel=1e-12)


def test_objective_estimate_beta_zero_is_mean_log_loss_times_volume():
    data = _uniform_dataset(25, np.random.default_rng(3))
    q = GaussianDensity([0.0, 0.0], np.eye(2))
    value = unbiased_objective_estimate(data, BoltzmannSpec(0.0), q)
    expected = 4.0 * np.mean(-q.logpdf(data.locations))
    assert value == pytest.approx(expected)


def test_objective_estimate_unchanged_by_duplicated_batches():
    data = _uniform_dataset(25, np.random.default_rng(4))
    doubled = Dataset(2)
    for _ in range(2):
        doubled.append_batch(data.locations, data.g, data.log_proposal)
    q = GaussianDensity([0.2, 0.0], np.eye(2) * 0.5)
    spec = BoltzmannSpec(5.0)
    assert unbiased_objective_estimate(doubled, spec, q) == pytest.approx(
        unbiased_objective_estimate(data, spec, q))


def test_objective_estimate_matches_quadrature():
    benchmark = get_benchmark(QUADRATIC)
    q = GaussianDensity([0.0, 0.0], np.eye(2) * 0.2)
    beta = 5.0
    grid = boltzmann_grid(benchmark, beta, grid_size=256)
    cell = (2.0 / 256) ** 2
    axis = -1.0 + (np.arange(256) + 0.5) * (2.0 / 256)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    truth = float(np.sum(np.exp(-beta * benchmark.function(pts)) * -q.logpdf(pts)) * cell)
    assert grid.g_reference == pytest.approx(0.0, abs=1e-4)

    rng = np.random.default_rng(5)
    estimates = np.array([
        unbiased_objective_estimate(_uniform_dataset(50, rng), BoltzmannSpec(beta), q)
        for _ in range(1000)
    ])
    se = estimates.std(ddof=1) / np.sqrt(len(estimates))
    assert abs(estimates.mean() - truth) < 3 * se + 1e-3


def test_importance_estimate_recovers_weighted_mean():
    rng = np.random.default_rng(6)
    h = UniformBoxDensity(get_benchmark(QUADRATIC).box)
    x = h.sample(rng, size=20_000)
    values = x[:, 0]
    q = GaussianDensity([0.3, 0.0], np.eye(2) * 0.05)
    assert importance_estimate(x, values, h.logpdf(x), q) == pytest.approx(0.3, abs=0.02)


def test_expected_g_point_mass_at_rosenbrock_optimum():
    oracle = OracleHandle(ROSENBROCK, noise_half_width=0.25)
    q = GaussianDensity([1.0, 1.0], 1e-8 * np.eye(2))
    estimate = expected_g_diagnostic(q, oracle, 1000, np.random.default_rng(7))
    assert estimate.value == pytest.approx(0.0, abs=1e-3)
    assert oracle.call_count == 0


def test_expected_g_wide_gaussian_near_box_mean():
    benchmark = get_benchmark(QUADRATIC)
    truth = boltzmann_grid(benchmark, 0.0).expected_g
    assert truth == pytest.approx(2.0 / 3.0, abs=1e-4)
    q = GaussianDensity([0.0, 0.0], np.eye(2) * 100.0)
    estimate = expected_g_diagnostic(q, OracleHandle(QUADRATIC), 20_000, np.random.default_rng(8))
    assert estimate.value == pytest.approx(truth, abs=4 * estimate.standard_error + 0.01)
    assert estimate.infeasible_fraction > 0.9


def test_expected_g_deterministic_for_fixed_seed():
    q = GaussianDensity([0.0, 0.0], np.eye(2) * 0.01)
    a = expected_g_diagnostic(q, OracleHandle(QUADRATIC), 1, np.random.default_rng(9))
    b = expected_g_diagnostic(q, OracleHandle(QUADRATIC), 1, np.random.default_rng(9))
    assert a.value == b.value


def test_kl_of_target_with_itself_is_zero():
    benchmark = get_benchmark(QUADRATIC)
    spec = BoltzmannSpec(5.0)
    grid = boltzmann_grid(benchmark, spec.beta)
    estimate = kl_pq_diagnostic(spec, OracleHandle(QUADRATIC), grid, 1000, np.random.default_rng(10))
    assert estimate.value == pytest.approx(0.0, abs=1e-9)


def test_kl_grows_when_q_is_widened():
    benchmark = get_benchmark(QUADRATIC)
    spec = BoltzmannSpec(5.0)
    grid = boltzmann_grid(benchmark, spec.beta)
    fitted = GaussianDensity(grid.mean, grid.covariance)
    wide = GaussianDensity(grid.mean, grid.covariance * 100.0)
    oracle = OracleHandle(QUADRATIC)
    near = kl_pq_diagnostic(spec, oracle, fitted, 2000, np.random.default_rng(11))
    far = kl_pq_diagnostic(spec, oracle, wide, 2000, np.random.default_rng(11))
    assert far.value > near.value
    assert near.value < 0.1
    assert oracle.call_count == 0


def test_grid_needs_two_dimensional_box():
    with pytest.raises(InvalidArgumentError):
        boltzmann_grid(get_benchmark(WOODS), 1.0)
