import numpy as np
import pytest
from scipy.stats import chi2

from pcsolver.density import (
    COVARIANCE_FLOOR,
    GaussianDensity,
    MixtureDensity,
    UniformBoxDensity,
    confidence_ellipsoid,
    responsibilities,
    uniform_mixture,
)
from pcsolver.exceptions import InvalidArgumentError
from pcsolver.oracle import BoxDomain


def test_standard_normal_logpdf_at_mean():
    g = GaussianDensity([0.0], [[1.0]])
    assert g.logpdf(np.array([0.0])) == pytest.approx(-0.5 * np.log(2 * np.pi))


def test_mixture_of_identical_components_matches_component():
    component = GaussianDensity([1.0, -1.0], [[2.0, 0.3], [0.3, 1.0]])
    mix = MixtureDensity([0.3, 0.7], [component, component])
    x = np.array([[0.2, 0.5], [3.0, -2.0]])
    np.testing.assert_allclose(mix.logpdf(x), component.logpdf(x), rtol=1e-12)


def test_uniform_box_logpdf():
    u = UniformBoxDensity(BoxDomain(1.0, 2))
    assert u.logpdf(np.zeros(2)) == pytest.approx(np.log(0.25))
    assert u.logpdf(np.array([2.0, 0.0])) == -np.inf


def test_dimension_mismatch():
    g = GaussianDensity([0.0, 0.0], np.eye(2))
    with pytest.raises(InvalidArgumentError):
        g.logpdf(np.zeros(3))


def test_mixture_weights_must_form_simplex():
    c = GaussianDensity([0.0], [[1.0]])
    with pytest.raises(InvalidArgumentError):
        MixtureDensity([0.5, 0.6], [c, c])
    with pytest.raises(InvalidArgumentError):
        MixtureDensity([-0.5, 1.5], [c, c])


def test_mixture_weight_sum_tolerance():
    c = GaussianDensity([0.0], [[1.0]])
    with pytest.raises(InvalidArgumentError):
        MixtureDensity([0.5, 0.5 + 1e-10], [c, c])
    assert MixtureDensity([0.5, 0.5 + 1e-14], [c, c]).weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_covariance_floor_applied():
    g = GaussianDensity([1.0, 2.0], np.zeros((2, 2)))
    assert np.linalg.eigvalsh(g.covariance).min() >= COVARIANCE_FLOOR * 0.999
    draws = g.sample(np.random.default_rng(0), size=100)
    assert np.abs(draws - g.mean).max() < 1e-3


def test_sample_moments_match():
    mean = np.array([1.0, -2.0])
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = GaussianDensity(mean, cov)
    n = 100_000
    draws = g.sample(np.random.default_rng(1), size=n)
    tol = 4 * np.sqrt(np.trace(cov) / n)
    assert np.abs(draws.mean(axis=0) - mean).max() < tol
    np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.05)


def test_mixture_with_zero_weight_draws_first_component_only():
    a = GaussianDensity([-10.0], [[0.01]])
    b = GaussianDensity([10.0], [[0.01]])
    mix = MixtureDensity([1.0, 0.0], [a, b])
    draws = mix.sample(np.random.default_rng(2), size=1000)
    assert np.all(draws < 0)


def test_single_draw_is_one_point():
    g = GaussianDensity([0.0, 0.0], np.eye(2))
    assert g.sample(np.random.default_rng(3)).shape == (2,)


def test_logpdf_integrates_to_one():
    q = MixtureDensity([0.4, 0.6], [GaussianDensity([-1.0, 0.0], np.eye(2) * 0.5),
                                    GaussianDensity([1.5, 1.0], [[1.0, 0.4], [0.4, 0.8]])])
    h = GaussianDensity([0.0, 0.0], np.eye(2) * 9.0)
    x = h.sample(np.random.default_rng(4), size=50_000)
    ratio = np.exp(q.logpdf(x) - h.logpdf(x))
    se = ratio.std(ddof=1) / np.sqrt(len(ratio))
    assert abs(ratio.mean() - 1.0) < 5 * se


def test_responsibilities_single_component():
    mix = MixtureDensity([1.0], [GaussianDensity([0.0], [[1.0]])])
    np.testing.assert_allclose(responsibilities(mix, np.array([3.0])), [1.0])


def test_responsibilities_symmetric_components():
    mix = MixtureDensity([0.5, 0.5], [GaussianDensity([-1.0], [[1.0]]), GaussianDensity([1.0], [[1.0]])])
    np.testing.assert_allclose(responsibilities(mix, np.array([0.0])), [0.5, 0.5])


def test_responsibilities_survive_underflow():
    mix = MixtureDensity([0.5, 0.5], [GaussianDensity([0.0], [[1e-4]]), GaussianDensity([1000.0], [[1e-4]])])
    resp = responsibilities(mix, np.array([[0.0], [1000.0], [500.0]]))
    assert np.all(resp >= 0)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)
    assert resp[0, 0] == pytest.approx(1.0)
    assert resp[1, 1] == pytest.approx(1.0)


def test_confidence_ellipsoid_radius():
    ellipse = confidence_ellipsoid(GaussianDensity([0.0, 0.0], np.eye(2)), 0.9)
    np.testing.assert_allclose(ellipse.radii, np.sqrt(chi2.ppf(0.9, 2)))
    assert ellipse.radii[0] == pytest.approx(2.146, abs=1e-3)


def test_confidence_ellipsoid_diagonal_axes():
    ellipse = confidence_ellipsoid(GaussianDensity([0.0, 0.0], np.diag([1.0, 4.0])), 0.5)
    np.testing.assert_allclose(np.abs(ellipse.axes), np.eye(2), atol=1e-12)
    small = confidence_ellipsoid(GaussianDensity([0.0, 0.0], np.eye(2)), 1e-9)
    assert small.radii.max() < 1e-3


def test_uniform_mixture_outer_weights():
    a = GaussianDensity([0.0], [[1.0]])
    b = MixtureDensity([0.25, 0.75], [a, GaussianDensity([2.0], [[1.0]])])
    mix = uniform_mixture([a, b])
    np.testing.assert_allclose(mix.weights, [0.5, 0.125, 0.375])
