import numpy as np
import pytest

from pcsolver.exceptions import EmptySupportError, InvalidArgumentError
from pcsolver.target import (
    BoltzmannSpec,
    Dataset,
    boltzmann_weights,
    log_boltzmann_weights,
    pooled_weight_view,
)


def _dataset(g, log_h=None, dim=1):
    g = np.asarray(g, dtype=float)
    locations = np.arange(len(g), dtype=float).reshape(-1, 1).repeat(dim, axis=1)
    log_h = np.zeros(len(g)) if log_h is None else np.asarray(log_h, dtype=float)
    return Dataset.from_arrays(locations, g, log_h)


def test_beta_zero_uniform_h_gives_equal_weights():
    data = _dataset([3.0, 1.0, 7.0], log_h=np.full(3, -np.log(4.0)))
    s = boltzmann_weights(data, BoltzmannSpec(0.0))
    np.testing.assert_allclose(s, s[0])


def test_infeasible_sample_gets_zero_weight():
    data = _dataset([1.0, np.inf, 2.0])
    s = boltzmann_weights(data, BoltzmannSpec(1.0))
    assert s[1] == 0.0
    assert np.all(s[[0, 2]] > 0)


def test_weights_by_hand():
    data = _dataset([0.0, 1.0])
    np.testing.assert_allclose(boltzmann_weights(data, BoltzmannSpec(np.log(2.0))), [1.0, 0.5])


def test_no_feasible_samples():
    with pytest.raises(EmptySupportError):
        log_boltzmann_weights(_dataset([np.inf, np.inf]), BoltzmannSpec(1.0))


def test_negative_beta_rejected():
    with pytest.raises(InvalidArgumentError):
        BoltzmannSpec(-1.0)


def test_single_batch_view_matches_weights():
    data = _dataset([0.5, 1.0, 2.0], log_h=[-1.0, -0.5, 0.0])
    spec = BoltzmannSpec(2.0)
    s = boltzmann_weights(data, spec)
    np.testing.assert_allclose(pooled_weight_view(data, spec).weights, s / s.sum())


def test_identical_batches_share_weights():
    data = Dataset(1)
    locations = np.array([[0.0], [1.0], [2.0]])
    data.append_batch(locations, [1.0, 2.0, 3.0], [-0.1, -0.2, -0.3])
    data.append_batch(locations, [1.0, 2.0, 3.0], [-0.1, -0.2, -0.3])
    view = pooled_weight_view(data, BoltzmannSpec(1.5))
    np.testing.assert_allclose(view.weights[:3], view.weights[3:])
    assert data.n_batches == 2
    assert data.batch_sizes == [3, 3]
    assert data.batch_index.tolist() == [1, 1, 1, 2, 2, 2]


def test_changing_beta_keeps_zero_pattern():
    data = _dataset([1.0, np.inf, 0.0, 5.0])
    zeros = [boltzmann_weights(data, BoltzmannSpec(b)) == 0 for b in (0.1, 1.0, 10.0)]
    assert all((z == zeros[0]).all() for z in zeros)


def test_normalized_weights_invariant_to_shift_in_g():
    g = np.array([0.3, 1.7, 2.2])
    spec = BoltzmannSpec(3.0)
    a = pooled_weight_view(_dataset(g), spec).weights
    b = pooled_weight_view(_dataset(g + 1000.0), spec).weights
    np.testing.assert_allclose(a, b, rtol=1e-12)
    assert a.sum() == pytest.approx(1.0)


def test_large_beta_does_not_underflow_to_nan():
    view = pooled_weight_view(_dataset([0.0, 1.0, 2.0]), BoltzmannSpec(5000.0))
    assert np.all(np.isfinite(view.weights))
    assert view.weights[0] == pytest.approx(1.0)


def test_dataset_columns_are_read_only():
    data = _dataset([1.0, 2.0])
    with pytest.raises(ValueError):
        data.g[0] = 5.0
    pooled_weight_view(data, BoltzmannSpec(1.0))
    assert data.g.tolist() == [1.0, 2.0]


def test_append_batch_validation():
    data = Dataset(2)
    with pytest.raises(InvalidArgumentError):
        data.append_batch(np.zeros((2, 3)), [1.0, 2.0], [0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        data.append_batch(np.zeros((2, 2)), [1.0, 2.0], [0.0, -np.inf])
    with pytest.raises(InvalidArgumentError):
        data.append_batch(np.zeros((2, 2)), [np.nan, 2.0], [0.0, 0.0])


def test_take_keeps_batch_labels():
    data = Dataset(1)
    data.append_batch([[0.0], [1.0]], [1.0, 2.0], [0.0, 0.0])
    data.append_batch([[2.0], [3.0]], [3.0, np.inf], [0.0, 0.0])
    subset = data.take([3, 0])
    assert subset.batch_index.tolist() == [2, 1]
    assert subset.feasible.tolist() == [False, True]
    assert data.best_g() == 1.0


def test_samples_round_trip_fields():
    data = _dataset([1.0, np.inf])
    samples = data.samples
    assert samples[0].feasible and not samples[1].feasible
    assert samples[0].proposal_density == pytest.approx(1.0)
    rebuilt = Dataset.from_samples(samples)
    assert rebuilt.g.tolist() == data.g.tolist()
