"""Exact discrete Wasserstein-2 machinery.

Discrete distributions are weighted point clouds in R^k. Transport plans are
optimal vertex solutions of the transportation LP, solved with POT's network
simplex, and carry the squared-Euclidean cost they attain.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import ot
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, InfeasibleMarginalsError, InputError, NumericInfeasibilityError

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-15
NORMALIZATION_TOLERANCE = 1e-9
MARGINAL_TOLERANCE = 1e-9
DEFAULT_MAX_ITERATIONS = 10_000_000


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Weighted point cloud: supports (n, k) with positive weights summing to one."""

    supports: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        supports = np.asarray(self.supports, dtype=np.float64)
        if supports.ndim == 1:
            supports = supports.reshape(-1, 1)
        if supports.ndim != 2 or supports.shape[0] == 0 or supports.shape[1] == 0:
            raise InputError(f"Supports must be a non-empty (n, k) array, got shape {supports.shape}")
        if not np.all(np.isfinite(supports)):
            raise InputError("Support points must be finite")

        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if weights.shape[0] != supports.shape[0]:
            raise InputError(
                f"Got {weights.shape[0]} weights for {supports.shape[0]} support points"
            )
        if not np.all(np.isfinite(weights)):
            raise InputError("Weights must be finite")
        if np.any(weights < WEIGHT_FLOOR):
            raise InputError(f"Weights must be at least {WEIGHT_FLOOR}, got min {weights.min()!r}")
        total = weights.sum()
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise InfeasibleMarginalsError(f"Weights sum to {total!r}, expected 1")

        object.__setattr__(self, "supports", _frozen(supports))
        object.__setattr__(self, "weights", _frozen(weights / total))

    @classmethod
    def uniform(cls, points: Sequence[Sequence[float]] | np.ndarray) -> "DiscreteDistribution":
        """Empirical measure putting mass 1/n on each point."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        n = points.shape[0]
        if n == 0:
            raise InputError("Cannot build an empirical distribution from zero points")
        return cls(points, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return int(self.supports.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.supports.shape[1])

    def mean(self) -> np.ndarray:
        return self.weights @ self.supports

    def translated(self, shift: Sequence[float] | np.ndarray) -> "DiscreteDistribution":
        return DiscreteDistribution(self.supports + np.asarray(shift, dtype=np.float64), self.weights)

    def scaled(self, factor: float) -> "DiscreteDistribution":
        return DiscreteDistribution(self.supports * factor, self.weights)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Squared Euclidean distances between the supports of two distributions."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling gamma between two discrete distributions and its transport cost."""

    gamma: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    cost: float

    def __post_init__(self) -> None:
        gamma = np.asarray(self.gamma, dtype=np.float64)
        source = np.asarray(self.source_weights, dtype=np.float64)
        target = np.asarray(self.target_weights, dtype=np.float64)
        if gamma.shape != (source.shape[0], target.shape[0]):
            raise InputError(
                f"Plan shape {gamma.shape} does not match marginals ({source.shape[0]}, {target.shape[0]})"
            )
        if np.any(gamma < 0.0):
            raise NumericInfeasibilityError("Transport plan has negative entries")
        row_gap = np.max(np.abs(gamma.sum(axis=1) - source))
        col_gap = np.max(np.abs(gamma.sum(axis=0) - target))
        if row_gap > MARGINAL_TOLERANCE or col_gap > MARGINAL_TOLERANCE:
            raise InfeasibleMarginalsError(
                f"Plan violates its marginals (row gap {row_gap:.3e}, column gap {col_gap:.3e})"
            )
        object.__setattr__(self, "gamma", _frozen(gamma))
        object.__setattr__(self, "source_weights", _frozen(source))
        object.__setattr__(self, "target_weights", _frozen(target))
        object.__setattr__(self, "cost", float(self.cost))

    @property
    def shape(self) -> tuple[int, int]:
        return self.gamma.shape  # type: ignore[return-value]

    def transposed(self) -> "TransportPlan":
        """The same coupling read from the target side."""
        return TransportPlan(self.gamma.T, self.target_weights, self.source_weights, self.cost)

    def conditional(self) -> np.ndarray:
        """Row-stochastic matrix P(T(xi_i) = xi_j) = gamma_ij / p_i."""
        return self.gamma / self.gamma.sum(axis=1, keepdims=True)


def _check_dimensions(src: DiscreteDistribution, dst: DiscreteDistribution) -> None:
    if src.dimension != dst.dimension:
        raise DimensionMismatchError(
            f"Dimension mismatch: source has k={src.dimension}, target has k={dst.dimension}"
        )


def build_cost_matrix(src: DiscreteDistribution, dst: DiscreteDistribution) -> CostMatrix:
    """c_ij = ||xi_i - xi_j||^2 between source and target supports."""
    _check_dimensions(src, dst)
    entries = cdist(src.supports, dst.supports, metric="sqeuclidean")
    return CostMatrix(entries)


def solve_transport(
    src: DiscreteDistribution,
    dst: DiscreteDistribution,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> TransportPlan:
    """Solve the discrete transport LP exactly and return an optimal vertex plan."""
    _check_dimensions(src, dst)
    gap = abs(src.weights.sum() - dst.weights.sum())
    if gap > NORMALIZATION_TOLERANCE:
        raise InfeasibleMarginalsError(f"Marginal masses differ by {gap:.3e}")

    cost_matrix = build_cost_matrix(src, dst).entries
    try:
        gamma, log = ot.emd(
            np.ascontiguousarray(src.weights),
            np.ascontiguousarray(dst.weights),
            np.ascontiguousarray(cost_matrix),
            numItermax=max_iterations,
            log=True,
        )
    except (ValueError, AssertionError) as e:
        raise InfeasibleMarginalsError(f"Network simplex rejected the marginals: {e}") from e

    if log.get("warning"):
        raise NumericInfeasibilityError(f"Network simplex did not reach optimality: {log['warning']}")

    gamma = np.maximum(np.asarray(gamma, dtype=np.float64), 0.0)
    cost = float(np.sum(cost_matrix * gamma))
    logger.debug(f"Solved {src.size}x{dst.size} transport problem, cost={cost!r}")
    return TransportPlan(gamma, src.weights, dst.weights, cost)


def w2_squared(src: DiscreteDistribution, dst: DiscreteDistribution) -> float:
    """Squared Wasserstein-2 distance between two discrete distributions."""
    return solve_transport(src, dst).cost


def _check_target(plan: TransportPlan, dst: DiscreteDistribution) -> None:
    if plan.shape[1] != dst.size:
        raise InputError(f"Plan has {plan.shape[1]} columns but target has {dst.size} supports")


def barycentric_map(plan: TransportPlan, dst: DiscreteDistribution) -> np.ndarray:
    """Conditional mean of the random transport mapping for each source point."""
    _check_target(plan, dst)
    return plan.conditional() @ dst.supports


def sample_map(
    plan: TransportPlan,
    dst: DiscreteDistribution,
    seed: int,
    stream: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Draw one realisation of the random transport mapping per source point.

    Row i uses its own generator seeded from (seed, *stream, i), so results do
    not depend on evaluation order.
    """
    _check_target(plan, dst)
    if not 0 <= seed < 2**64:
        raise InputError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    prefix = [int(seed), *(int(s) for s in (stream or ()))]
    cumulative = np.cumsum(plan.conditional(), axis=1)
    picks = np.empty(plan.shape[0], dtype=np.int64)
    for i in range(plan.shape[0]):
        rng = np.random.default_rng([*prefix, i])
        u = rng.random() * cumulative[i, -1]
        j = int(np.searchsorted(cumulative[i], u, side="right"))
        # never land on a zero-mass column past the end
        picks[i] = min(j, int(np.flatnonzero(plan.gamma[i] > 0.0)[-1]))
    return dst.supports[picks].copy()
