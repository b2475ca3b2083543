"""Approximate and exact Wasserstein-2 barycenters of discrete distributions."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .discrete_ot import DiscreteDistribution, barycentric_map, solve_transport, w2_squared
from .errors import DimensionMismatchError, InputError, NumericInfeasibilityError, OracleCapExceededError

logger = logging.getLogger(__name__)

DEFAULT_ORACLE_CAP = 100_000
ORACLE_MASS_THRESHOLD = 1e-12


@dataclass(frozen=True, eq=False)
class BarycenterResult:
    """The approximate barycenter together with the mapped point of every group member."""

    barycenter: DiscreteDistribution
    per_group_targets: List[np.ndarray]
    group_weights: np.ndarray

    def offsets(self) -> List[int]:
        """Index in the barycenter supports where each group's mapped points start."""
        starts = [0]
        for targets in self.per_group_targets[:-1]:
            starts.append(starts[-1] + targets.shape[0])
        return starts


def resolve_group_weights(
    groups: Sequence[DiscreteDistribution],
    weights: Optional[Sequence[float] | np.ndarray] = None,
) -> np.ndarray:
    """Validate group weights, defaulting to p_s = n_s / sum n_s'."""
    if not groups:
        raise InputError("At least one group is required")
    dimensions = {g.dimension for g in groups}
    if len(dimensions) != 1:
        raise DimensionMismatchError(f"Groups have differing dimensions: {sorted(dimensions)}")

    if weights is None:
        sizes = np.array([g.size for g in groups], dtype=np.float64)
        return sizes / sizes.sum()

    p = np.asarray(weights, dtype=np.float64).ravel()
    if p.shape[0] != len(groups):
        raise InputError(f"Got {p.shape[0]} group weights for {len(groups)} groups")
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0):
        raise InputError("Group weights must be positive and finite")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InputError(f"Group weights sum to {p.sum()!r}, expected 1")
    return p / p.sum()


def approximate_barycenter(
    groups: Sequence[DiscreteDistribution],
    weights: Optional[Sequence[float] | np.ndarray] = None,
) -> BarycenterResult:
    """Pairwise-transport approximation of the barycenter.

    Every point is sent to the p-weighted average of its expected images under
    the optimal plans towards each group; a group contributes the point itself.
    """
    p = resolve_group_weights(groups, weights)
    m = len(groups)

    expected = [[np.empty(0)] * m for _ in range(m)]
    for s in range(m):
        expected[s][s] = groups[s].supports
    for s in range(m):
        for t in range(s + 1, m):
            plan = solve_transport(groups[s], groups[t])
            expected[s][t] = barycentric_map(plan, groups[t])
            expected[t][s] = barycentric_map(plan.transposed(), groups[s])
            logger.debug(f"Pairwise plan {s}->{t}: W2^2={plan.cost!r}")

    targets = []
    for s in range(m):
        mapped = np.zeros_like(groups[s].supports)
        for t in range(m):
            mapped += p[t] * expected[s][t]
        mapped.setflags(write=False)
        targets.append(mapped)

    supports = np.vstack(targets)
    masses = np.concatenate([p[s] * groups[s].weights for s in range(m)])
    logger.info(f"Built approximate barycenter with {supports.shape[0]} supports from {m} group(s)")
    return BarycenterResult(DiscreteDistribution(supports, masses), targets, p)


def barycenter_objective(
    candidate: DiscreteDistribution,
    groups: Sequence[DiscreteDistribution],
    weights: Optional[Sequence[float] | np.ndarray] = None,
) -> float:
    """Psi(nu) = sum_s p_s W2^2(nu_s, nu)."""
    p = resolve_group_weights(groups, weights)
    return float(sum(p[s] * w2_squared(groups[s], candidate) for s in range(len(groups))))


def exact_barycenter_oracle(
    groups: Sequence[DiscreteDistribution],
    weights: Optional[Sequence[float] | np.ndarray] = None,
    cap: int = DEFAULT_ORACLE_CAP,
) -> DiscreteDistribution:
    """Exact barycenter via the multi-marginal LP over support tuples.

    Only practical for tiny instances; refuses when the tuple count exceeds cap.
    """
    p = resolve_group_weights(groups, weights)
    sizes = [g.size for g in groups]
    n_tuples = math.prod(sizes)
    if n_tuples > cap:
        raise OracleCapExceededError(
            f"Exact barycenter needs {n_tuples} tuple variables, above the cap of {cap}"
        )

    tuples = np.indices(sizes).reshape(len(sizes), -1).T
    points = [groups[s].supports[tuples[:, s]] for s in range(len(groups))]
    centers = sum(p[s] * points[s] for s in range(len(groups)))
    costs = sum(p[s] * np.sum((points[s] - centers) ** 2, axis=1) for s in range(len(groups)))

    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    rows = np.concatenate([offsets[s] + tuples[:, s] for s in range(len(groups))])
    cols = np.tile(np.arange(n_tuples), len(groups))
    a_eq = sparse.coo_matrix(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(int(sum(sizes)), n_tuples)
    ).tocsr()
    b_eq = np.concatenate([g.weights for g in groups])

    result = linprog(
        np.asarray(costs, dtype=np.float64),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if result.status != 0:
        raise NumericInfeasibilityError(f"Multi-marginal LP failed: {result.message}")

    mass = np.asarray(result.x)
    keep = mass > ORACLE_MASS_THRESHOLD
    logger.debug(f"Exact barycenter LP: objective={result.fun!r}, {int(keep.sum())} active tuples")
    return DiscreteDistribution(np.asarray(centers)[keep], mass[keep] / mass[keep].sum())


def approximation_ratio(
    groups: Sequence[DiscreteDistribution],
    weights: Optional[Sequence[float] | np.ndarray] = None,
    cap: int = DEFAULT_ORACLE_CAP,
) -> float:
    """Psi of the approximate barycenter divided by Psi of the exact one."""
    approx = approximate_barycenter(groups, weights).barycenter
    exact = exact_barycenter_oracle(groups, weights, cap)
    psi_approx = barycenter_objective(approx, groups, weights)
    psi_exact = barycenter_objective(exact, groups, weights)
    if psi_exact <= 1e-15:
        return 1.0 if psi_approx <= 1e-12 else math.inf
    return psi_approx / psi_exact
