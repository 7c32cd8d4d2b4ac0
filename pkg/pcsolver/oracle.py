"""Benchmark objectives and the oracle handle that counts calls to them."""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

QUADRATIC = "quadratic2d"
ROSENBROCK = "rosenbrock2d"
WOODS = "woods4d"


@dataclass(frozen=True)
class BoxDomain:
    """Open infinity-norm box ‖x‖∞ < half_width in `dimension` coordinates."""

    half_width: float
    dimension: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise InvalidArgumentError(f"half_width must be positive, got {self.half_width}")
        if self.dimension < 1:
            raise InvalidArgumentError(f"dimension must be >= 1, got {self.dimension}")

    @property
    def volume(self) -> float:
        return float((2.0 * self.half_width) ** self.dimension)

    def contains(self, points) -> np.ndarray:
        """Boolean mask over rows of `points` (or a scalar bool for one point)."""
        pts = np.asarray(points, dtype=float)
        inside = np.max(np.abs(pts), axis=-1) < self.half_width
        return inside


@dataclass(frozen=True)
class OracleResponse:
    g: float
    feasible: bool


@dataclass(frozen=True)
class Benchmark:
    """An objective G together with its domain.

    `function` maps an (m, n) array to m values and must be pure. `box` is the
    feasible region (None means all of R^n); `init_box` is where the first
    uniform batch is drawn.
    """

    id: str
    dimension: int
    function: Callable[[np.ndarray], np.ndarray]
    box: Optional[BoxDomain]
    init_box: BoxDomain
    optimum_point: Tuple[float, ...]
    optimum_value: float = 0.0

    def evaluate_many(self, points) -> np.ndarray:
        pts = _as_rows(points, self.dimension)
        values = np.asarray(self.function(pts), dtype=float)
        if self.box is not None:
            values = np.where(self.box.contains(pts), values, np.inf)
        return values

    def evaluate(self, x) -> OracleResponse:
        g = float(self.evaluate_many(x)[0])
        return OracleResponse(g=g, feasible=bool(np.isfinite(g)))


def _as_rows(points, dimension: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[np.newaxis, :]
    if pts.ndim != 2 or pts.shape[1] != dimension:
        raise InvalidArgumentError(
            f"expected points of dimension {dimension}, got shape {np.shape(points)}"
        )
    if not np.all(np.isfinite(pts)):
        raise InvalidArgumentError("points must have finite coordinates")
    return pts


def _quadratic(pts: np.ndarray) -> np.ndarray:
    x1, x2 = pts[:, 0], pts[:, 1]
    return x1 ** 2 + x2 ** 2 + x1 * x2


def _rosenbrock(pts: np.ndarray) -> np.ndarray:
    x1, x2 = pts[:, 0], pts[:, 1]
    return 100.0 * (x2 - x1 ** 2) ** 2 + (1.0 - x1) ** 2


def _woods(pts: np.ndarray) -> np.ndarray:
    # First term is 100(x2 - x1)^2, not the classical 100(x2 - x1^2)^2.
    x1, x2, x3, x4 = pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3]
    return (
        100.0 * (x2 - x1) ** 2
        + (1.0 - x1) ** 2
        + 90.0 * (x4 - x3 ** 2) ** 2
        + (1.0 - x3) ** 2
        + 10.1 * ((1.0 - x2) ** 2 + (1.0 - x4) ** 2)
        + 19.8 * (1.0 - x2) * (1.0 - x4)
    )


BENCHMARKS: Dict[str, Benchmark] = {
    QUADRATIC: Benchmark(
        id=QUADRATIC,
        dimension=2,
        function=_quadratic,
        box=BoxDomain(1.0, 2),
        init_box=BoxDomain(1.0, 2),
        optimum_point=(0.0, 0.0),
    ),
    ROSENBROCK: Benchmark(
        id=ROSENBROCK,
        dimension=2,
        function=_rosenbrock,
        box=BoxDomain(4.0, 2),
        init_box=BoxDomain(4.0, 2),
        optimum_point=(1.0, 1.0),
    ),
    WOODS: Benchmark(
        id=WOODS,
        dimension=4,
        function=_woods,
        box=None,
        init_box=BoxDomain(4.0, 4),
        optimum_point=(1.0, 1.0, 1.0, 1.0),
    ),
}


def get_benchmark(benchmark_id: str) -> Benchmark:
    try:
        return BENCHMARKS[benchmark_id]
    except KeyError:
        raise InvalidArgumentError(
            f"Unknown benchmark {benchmark_id!r}. Must be one of {sorted(BENCHMARKS)}"
        ) from None


def eval_quadratic(x, box: BoxDomain = BoxDomain(1.0, 2)) -> OracleResponse:
    pts = _as_rows(x, 2)
    g = float(_quadratic(pts)[0]) if box.contains(pts)[0] else np.inf
    return OracleResponse(g=g, feasible=bool(np.isfinite(g)))


def eval_rosenbrock(x, box: BoxDomain = BoxDomain(4.0, 2)) -> OracleResponse:
    pts = _as_rows(x, 2)
    g = float(_rosenbrock(pts)[0]) if box.contains(pts)[0] else np.inf
    return OracleResponse(g=g, feasible=bool(np.isfinite(g)))


def eval_woods(x) -> OracleResponse:
    pts = _as_rows(x, 4)
    return OracleResponse(g=float(_woods(pts)[0]), feasible=True)


@dataclass
class OracleHandle:
    """Counted access to a benchmark, with optional uniform noise U[-a, a].

    Non-diagnostic queries increment `call_count` once per point, feasible or
    not. Diagnostic handles never touch the counter. The counter is guarded by
    a lock so one handle can be shared between threads.
    """

    benchmark: Benchmark
    noise_half_width: float = 0.0
    diagnostic: bool = False
    _calls: int = field(default=0, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.benchmark, str):
            self.benchmark = get_benchmark(self.benchmark)
        if self.noise_half_width < 0:
            raise InvalidArgumentError(
                f"noise half-width must be non-negative, got {self.noise_half_width}"
            )

    @property
    def call_count(self) -> int:
        return self._calls

    @property
    def dimension(self) -> int:
        return self.benchmark.dimension

    def as_diagnostic(self) -> "OracleHandle":
        """Noise-free, counter-bypassing view of the same benchmark."""
        return OracleHandle(self.benchmark, noise_half_width=0.0, diagnostic=True)

    def query_many(self, points, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Evaluate every row of `points`; returns (g, feasible)."""
        pts = _as_rows(points, self.dimension)
        g = self.benchmark.evaluate_many(pts)
        if self.noise_half_width > 0:
            noise = rng.uniform(-self.noise_half_width, self.noise_half_width, size=len(g))
            # inf + noise stays inf, so the feasibility mask survives the noise
            g = g + noise
        if not self.diagnostic:
            with self._lock:
                self._calls += len(g)
        return g, np.isfinite(g)

    def query(self, x, rng: np.random.Generator) -> OracleResponse:
        g, feasible = self.query_many(x, rng)
        return OracleResponse(g=float(g[0]), feasible=bool(feasible[0]))
