"""Pooled sample record and Boltzmann likelihood-ratio weights."""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .exceptions import EmptySupportError, InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sample:
    """One oracle interaction.

    `log_proposal` is ln h^j(location) at generation time; `proposal_density`
    is its exponent.
    """

    location: np.ndarray
    g: float
    log_proposal: float
    batch_index: int
    feasible: bool

    @property
    def proposal_density(self) -> float:
        return float(np.exp(self.log_proposal))


@dataclass(frozen=True)
class BoltzmannSpec:
    """Target p^beta(x) proportional to exp(-beta G(x))."""

    beta: float

    def __post_init__(self):
        if not self.beta >= 0 or not np.isfinite(self.beta):
            raise InvalidArgumentError(f"beta must be a non-negative finite number, got {self.beta}")


class Dataset:
    """Append-only pooled record of samples across batches.

    Columns are stored as numpy arrays; `take` builds derived datasets (folds,
    bootstrap replicates) that keep the original batch labels.
    """

    def __init__(self, dimension: int):
        if dimension < 1:
            raise InvalidArgumentError(f"dimension must be >= 1, got {dimension}")
        self.dimension = dimension
        self._locations = np.empty((0, dimension))
        self._g = np.empty(0)
        self._log_proposal = np.empty(0)
        self._batch_index = np.empty(0, dtype=int)
        self._batch_sizes: List[int] = []

    @classmethod
    def from_arrays(cls, locations, g, log_proposal, batch_index=None) -> "Dataset":
        locations = np.atleast_2d(np.asarray(locations, dtype=float))
        data = cls(locations.shape[1])
        if batch_index is None:
            data.append_batch(locations, g, log_proposal)
            return data
        data._set_columns(locations, np.asarray(g, float), np.asarray(log_proposal, float),
                          np.asarray(batch_index, int))
        return data

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "Dataset":
        if not samples:
            raise InvalidArgumentError("at least one sample is required")
        return cls.from_arrays(
            np.array([s.location for s in samples]),
            np.array([s.g for s in samples]),
            np.array([s.log_proposal for s in samples]),
            np.array([s.batch_index for s in samples]),
        )

    def _set_columns(self, locations, g, log_proposal, batch_index):
        self._locations = locations
        self._g = g
        self._log_proposal = log_proposal
        self._batch_index = batch_index
        self._batch_sizes = np.bincount(batch_index)[1:].tolist() if len(batch_index) else []
        for arr in (self._locations, self._g, self._log_proposal, self._batch_index):
            arr.setflags(write=False)

    def append_batch(self, locations, g, log_proposal) -> int:
        """Append one batch; returns its 1-based batch index."""
        locations = np.atleast_2d(np.asarray(locations, dtype=float))
        g = np.asarray(g, dtype=float).reshape(-1)
        log_proposal = np.asarray(log_proposal, dtype=float).reshape(-1)
        m = locations.shape[0]
        if m == 0:
            raise InvalidArgumentError("a batch must not be empty")
        if locations.shape[1] != self.dimension:
            raise InvalidArgumentError(
                f"batch dimension {locations.shape[1]} does not match dataset dimension {self.dimension}"
            )
        if g.shape != (m,) or log_proposal.shape != (m,):
            raise InvalidArgumentError("g and log_proposal must have one entry per location")
        if not np.all(np.isfinite(log_proposal)):
            raise InvalidArgumentError("proposal density must be positive at every recorded sample")
        if np.any(np.isnan(g)) or np.any(g == -np.inf):
            raise InvalidArgumentError("g must be finite or +inf")
        index = len(self._batch_sizes) + 1
        self._set_columns(
            np.vstack([self._locations, locations]),
            np.concatenate([self._g, g]),
            np.concatenate([self._log_proposal, log_proposal]),
            np.concatenate([self._batch_index, np.full(m, index)]),
        )
        return index

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        derived = Dataset(self.dimension)
        derived._set_columns(
            self._locations[idx], self._g[idx], self._log_proposal[idx], self._batch_index[idx]
        )
        return derived

    def __len__(self) -> int:
        return self._g.shape[0]

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    @property
    def samples(self) -> List[Sample]:
        return [
            Sample(self._locations[i], float(self._g[i]), float(self._log_proposal[i]),
                   int(self._batch_index[i]), bool(np.isfinite(self._g[i])))
            for i in range(len(self))
        ]

    @property
    def locations(self) -> np.ndarray:
        return self._locations

    @property
    def g(self) -> np.ndarray:
        return self._g

    @property
    def log_proposal(self) -> np.ndarray:
        return self._log_proposal

    @property
    def proposal_density(self) -> np.ndarray:
        return np.exp(self._log_proposal)

    @property
    def batch_index(self) -> np.ndarray:
        return self._batch_index

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self._g)

    @property
    def n_batches(self) -> int:
        return len(self._batch_sizes)

    @property
    def batch_sizes(self) -> List[int]:
        return list(self._batch_sizes)

    def best_g(self) -> float:
        feasible = self.feasible
        return float(self._g[feasible].min()) if feasible.any() else np.inf


def log_boltzmann_weights(data: Dataset, spec: BoltzmannSpec) -> np.ndarray:
    """ln s^i = -beta (g^i - g_min) - ln h^i, and -inf for infeasible samples."""
    if len(data) == 0:
        raise InvalidArgumentError("dataset is empty")
    feasible = data.feasible
    if not feasible.any():
        raise EmptySupportError("no feasible samples in dataset")
    g_min = data.g[feasible].min()
    log_s = np.full(len(data), -np.inf)
    log_s[feasible] = -spec.beta * (data.g[feasible] - g_min) - data.log_proposal[feasible]
    return log_s


def boltzmann_weights(data: Dataset, spec: BoltzmannSpec) -> np.ndarray:
    return np.exp(log_boltzmann_weights(data, spec))


@dataclass(frozen=True)
class WeightedView:
    """Flat (location, weight) list across all batches; weights sum to 1."""

    points: np.ndarray
    weights: np.ndarray

    def __iter__(self) -> Iterator[Tuple[np.ndarray, float]]:
        return zip(self.points, self.weights)

    def __len__(self) -> int:
        return len(self.weights)


def pooled_weight_view(data: Dataset, spec: BoltzmannSpec) -> WeightedView:
    """Uniform per-sample pooling of every batch, self-normalized."""
    log_s = log_boltzmann_weights(data, spec)
    weights = np.exp(log_s - logsumexp(log_s))
    logger.debug(
        "Pooled weight view computed",
        extra={"beta": spec.beta, "samples": len(data), "batches": data.n_batches,
               "effective_sample_size": float(1.0 / np.sum(weights ** 2))},
    )
    return WeightedView(points=data.locations, weights=weights)
