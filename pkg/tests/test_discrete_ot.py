"""Tests for the discrete transport module."""

import itertools

import numpy as np
import pytest

from fairbarycenter.discrete_ot import (
    DiscreteDistribution,
    TransportPlan,
    barycentric_map,
    build_cost_matrix,
    sample_map,
    solve_transport,
    w2_squared,
)
from fairbarycenter.errors import DimensionMismatchError, InfeasibleMarginalsError, InputError


def vertex_enumeration_cost(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    """Optimal transport cost by enumerating basic feasible solutions of the transportation polytope."""
    n, m = cost.shape
    rank = n + m - 1
    constraints = np.zeros((n + m, n * m))
    for i in range(n):
        constraints[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        constraints[n + j, j::m] = 1.0
    # one equality is implied by the others
    constraints = constraints[:-1]
    rhs = np.concatenate([a, b[:-1]])

    bases = np.array(list(itertools.combinations(range(n * m), rank)))
    matrices = np.transpose(constraints[:, bases], (1, 0, 2))
    invertible = np.abs(np.linalg.det(matrices)) > 0.5
    bases, matrices = bases[invertible], matrices[invertible]
    solutions = np.linalg.solve(matrices, np.broadcast_to(rhs[:, None], (bases.shape[0], rank, 1)))[..., 0]
    feasible = np.all(solutions >= -1e-12, axis=1)
    costs = np.sum(cost.ravel()[bases[feasible]] * solutions[feasible], axis=1)
    return float(costs.min())


def random_distribution(rng: np.random.Generator, n: int, k: int) -> DiscreteDistribution:
    weights = rng.random(n) + 0.05
    return DiscreteDistribution(rng.normal(size=(n, k)), weights / weights.sum())


class TestDiscreteDistribution:
    """Test construction rules of discrete distributions."""

    def test_uniform(self):
        """Test the empirical measure puts equal mass on every point."""
        dist = DiscreteDistribution.uniform([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])

        assert dist.size == 3
        assert dist.dimension == 2
        assert np.allclose(dist.weights, 1.0 / 3.0)

    def test_one_dimensional_points_become_columns(self):
        """Test a flat list of scalars is read as n points in R^1."""
        dist = DiscreteDistribution.uniform([0.0, 1.0, 2.0])
        assert dist.supports.shape == (3, 1)

    def test_duplicates_are_kept(self):
        """Test duplicate supports are not merged."""
        dist = DiscreteDistribution.uniform([[1.0], [1.0]])
        assert dist.size == 2

    def test_renormalizes_within_tolerance(self):
        """Test weights off by less than 1e-9 are renormalized."""
        dist = DiscreteDistribution(np.zeros((2, 1)), np.array([0.5, 0.5 + 5e-10]))
        assert abs(dist.weights.sum() - 1.0) < 1e-15

    def test_rejects_bad_total(self):
        """Test weights far from summing to one are rejected."""
        with pytest.raises(InfeasibleMarginalsError):
            DiscreteDistribution(np.zeros((2, 1)), np.array([0.5, 0.6]))

    def test_rejects_tiny_weight(self):
        """Test weights below the floor are rejected rather than dropped."""
        with pytest.raises(InputError):
            DiscreteDistribution(np.zeros((2, 1)), np.array([1.0, 1e-16]))

    def test_rejects_nonfinite_support(self):
        """Test non-finite points are rejected."""
        with pytest.raises(InputError):
            DiscreteDistribution.uniform([[0.0], [np.inf]])

    def test_is_read_only(self):
        """Test supports cannot be mutated after construction."""
        dist = DiscreteDistribution.uniform([[0.0], [1.0]])
        with pytest.raises(ValueError):
            dist.supports[0, 0] = 5.0


class TestBuildCostMatrix:
    """Test squared Euclidean cost matrices."""

    def test_identical_points(self):
        """Test coincident points cost zero."""
        dist = DiscreteDistribution.uniform([[0.0, 0.0]])
        assert build_cost_matrix(dist, dist).entries.tolist() == [[0.0]]

    def test_pythagorean_distances(self):
        """Test squared distances of a small example."""
        src = DiscreteDistribution.uniform([[0.0, 0.0], [1.0, 0.0]])
        dst = DiscreteDistribution.uniform([[0.0, 1.0]])

        assert build_cost_matrix(src, dst).entries.tolist() == [[1.0], [2.0]]

    def test_matches_double_loop(self):
        """Test entries against a direct pairwise recomputation."""
        rng = np.random.default_rng(3)
        src = random_distribution(rng, 3, 2)
        dst = random_distribution(rng, 4, 2)
        entries = build_cost_matrix(src, dst).entries

        for i in range(3):
            for j in range(4):
                diff = src.supports[i] - dst.supports[j]
                assert entries[i, j] == pytest.approx(float(diff @ diff), abs=1e-12)

    def test_dimension_mismatch(self):
        """Test differing dimensions are rejected."""
        src = DiscreteDistribution.uniform([[0.0, 0.0]])
        dst = DiscreteDistribution.uniform([[0.0]])
        with pytest.raises(DimensionMismatchError):
            build_cost_matrix(src, dst)


class TestSolveTransport:
    """Test the exact transport solver."""

    def test_identical_distributions(self):
        """Test a distribution transported onto itself costs nothing."""
        dist = DiscreteDistribution.uniform([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
        plan = solve_transport(dist, dist)

        assert plan.cost == pytest.approx(0.0, abs=1e-12)
        cost = build_cost_matrix(dist, dist).entries
        assert np.all(plan.gamma[cost > 0.0] <= 1e-12)

    def test_monotone_matching_in_one_dimension(self):
        """Test {0, 1} to {2, 3} uses the monotone matching."""
        src = DiscreteDistribution.uniform([0.0, 1.0])
        dst = DiscreteDistribution.uniform([2.0, 3.0])
        plan = solve_transport(src, dst)

        assert plan.cost == pytest.approx(4.0, abs=1e-12)
        assert np.allclose(plan.gamma, [[0.5, 0.0], [0.0, 0.5]])

    def test_matches_vertex_enumeration(self):
        """Test 200 random small instances against the polytope vertex oracle."""
        rng = np.random.default_rng(2024)
        for _ in range(200):
            n, m, k = rng.integers(1, 5), rng.integers(1, 5), rng.integers(1, 4)
            src = random_distribution(rng, n, k)
            dst = random_distribution(rng, m, k)
            plan = solve_transport(src, dst)
            expected = vertex_enumeration_cost(src.weights, dst.weights, build_cost_matrix(src, dst).entries)

            assert plan.cost == pytest.approx(expected, abs=1e-9)

    def test_marginal_feasibility(self):
        """Test a thousand plans respect both marginals and report their cost."""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            src = random_distribution(rng, int(rng.integers(1, 7)), 2)
            dst = random_distribution(rng, int(rng.integers(1, 7)), 2)
            plan = solve_transport(src, dst)

            assert np.all(plan.gamma >= 0.0)
            assert np.max(np.abs(plan.gamma.sum(axis=1) - src.weights)) <= 1e-9
            assert np.max(np.abs(plan.gamma.sum(axis=0) - dst.weights)) <= 1e-9
            cost = build_cost_matrix(src, dst).entries
            assert plan.cost == pytest.approx(float(np.sum(cost * plan.gamma)), abs=1e-9)

    def test_dimension_mismatch(self):
        """Test differing dimensions are rejected."""
        with pytest.raises(DimensionMismatchError):
            solve_transport(DiscreteDistribution.uniform([[0.0]]), DiscreteDistribution.uniform([[0.0, 1.0]]))


class TestTransportPlan:
    """Test plan validation."""

    def test_rejects_violated_marginals(self):
        """Test a coupling with wrong row sums is rejected."""
        with pytest.raises(InfeasibleMarginalsError):
            TransportPlan(np.array([[0.6, 0.0], [0.0, 0.4]]), np.array([0.5, 0.5]), np.array([0.6, 0.4]), 0.0)

    def test_transposed(self):
        """Test transposing swaps the marginals."""
        plan = TransportPlan(np.array([[0.25, 0.25], [0.0, 0.5]]), np.array([0.5, 0.5]), np.array([0.25, 0.75]), 1.0)
        flipped = plan.transposed()

        assert flipped.shape == (2, 2)
        assert flipped.source_weights.tolist() == [0.25, 0.75]
        assert flipped.cost == 1.0


class TestW2Squared:
    """Test metric properties of the squared Wasserstein-2 distance."""

    def test_point_masses(self):
        """Test two Dirac masses are at squared Euclidean distance."""
        a = DiscreteDistribution.uniform([[1.0, 2.0]])
        b = DiscreteDistribution.uniform([[4.0, 6.0]])
        assert w2_squared(a, b) == pytest.approx(25.0)

    def test_sorted_matching_in_one_dimension(self):
        """Test 1-D equal-size uniform distributions match sorted values."""
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            x, y = rng.normal(size=n), rng.normal(size=n) + 1.0
            expected = float(np.mean((np.sort(x) - np.sort(y)) ** 2))
            assert w2_squared(DiscreteDistribution.uniform(x), DiscreteDistribution.uniform(y)) == pytest.approx(
                expected, abs=1e-9
            )

    def test_metric_axioms(self):
        """Test symmetry, nonnegativity and the triangle inequality on random triples."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b, c = (random_distribution(rng, int(rng.integers(1, 5)), 2) for _ in range(3))
            ab, ba = w2_squared(a, b), w2_squared(b, a)
            bc, ac = w2_squared(b, c), w2_squared(a, c)

            assert ab == pytest.approx(ba, abs=1e-9)
            assert min(ab, bc, ac) >= 0.0
            assert np.sqrt(ac) <= np.sqrt(ab) + np.sqrt(bc) + 1e-9

    def test_zero_iff_same_multiset(self):
        """Test a permutation of the same weighted points is at distance zero."""
        points = np.array([[0.0, 1.0], [2.0, 3.0], [-1.0, 0.5]])
        weights = np.array([0.2, 0.3, 0.5])
        a = DiscreteDistribution(points, weights)
        b = DiscreteDistribution(points[::-1], weights[::-1])
        c = DiscreteDistribution(points, np.array([0.3, 0.2, 0.5]))

        assert w2_squared(a, b) == pytest.approx(0.0, abs=1e-12)
        assert w2_squared(a, c) > 0.0

    def test_translation_and_scaling(self):
        """Test a common shift leaves W2 unchanged and scaling by c multiplies it by c^2."""
        rng = np.random.default_rng(9)
        for _ in range(20):
            a, b = random_distribution(rng, 4, 3), random_distribution(rng, 3, 3)
            base = w2_squared(a, b)
            shift = rng.normal(size=3) * 5.0
            factor = float(rng.uniform(0.1, 10.0))

            assert w2_squared(a.translated(shift), b.translated(shift)) == pytest.approx(base, abs=1e-9)
            assert w2_squared(a.scaled(factor), b.scaled(factor)) == pytest.approx(factor**2 * base, rel=1e-9)


class TestMappings:
    """Test deterministic and random transport mappings."""

    def test_barycentric_map_on_monotone_example(self):
        """Test {0, 1} maps onto (2, 3)."""
        src = DiscreteDistribution.uniform([0.0, 1.0])
        dst = DiscreteDistribution.uniform([2.0, 3.0])
        mapped = barycentric_map(solve_transport(src, dst), dst)

        assert mapped.ravel().tolist() == pytest.approx([2.0, 3.0])

    def test_barycentric_map_of_point_mass(self):
        """Test a single source point maps to the target mean."""
        src = DiscreteDistribution.uniform([[0.0, 0.0]])
        dst = DiscreteDistribution(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0.25, 0.75]))
        mapped = barycentric_map(solve_transport(src, dst), dst)

        assert np.allclose(mapped[0], dst.mean())

    def test_identity(self):
        """Test a distribution with distinct points maps onto itself."""
        dist = DiscreteDistribution.uniform([[0.0], [1.0], [5.0]])
        assert np.allclose(barycentric_map(solve_transport(dist, dist), dist), dist.supports)

    def test_sample_map_on_deterministic_plan(self):
        """Test a plan with one entry per row samples its only target for every seed."""
        src = DiscreteDistribution.uniform([0.0, 1.0])
        dst = DiscreteDistribution.uniform([2.0, 3.0])
        plan = solve_transport(src, dst)
        expected = barycentric_map(plan, dst)

        for seed in (0, 1, 12345, 2**63):
            assert np.array_equal(sample_map(plan, dst, seed), expected)

    def test_sample_map_is_deterministic(self):
        """Test the same seed draws the same targets."""
        rng = np.random.default_rng(1)
        src, dst = random_distribution(rng, 5, 2), random_distribution(rng, 6, 2)
        plan = solve_transport(src, dst)

        assert np.array_equal(sample_map(plan, dst, 42), sample_map(plan, dst, 42))

    def test_sample_map_frequencies(self):
        """Test drawn targets follow the conditional plan row."""
        draws = 100_000
        conditional = np.array([0.2, 0.5, 0.3])
        gamma = np.tile(conditional / draws, (draws, 1))
        plan = TransportPlan(gamma, np.full(draws, 1.0 / draws), conditional, 0.0)
        dst = DiscreteDistribution(np.array([[0.0], [1.0], [2.0]]), conditional)

        picks = sample_map(plan, dst, seed=99).ravel().astype(int)
        frequencies = np.bincount(picks, minlength=3) / draws
        standard_errors = np.sqrt(conditional * (1.0 - conditional) / draws)

        assert np.all(np.abs(frequencies - conditional) <= 4.0 * standard_errors)

    def test_sample_map_rejects_bad_seed(self):
        """Test seeds outside 64 bits are rejected."""
        dist = DiscreteDistribution.uniform([[0.0]])
        with pytest.raises(InputError):
            sample_map(solve_transport(dist, dist), dist, -1)
