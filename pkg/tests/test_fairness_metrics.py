"""Tests for fairness metrics and the per-coordinate baseline."""

import numpy as np
import pytest
from pydantic import ValidationError

from fairbarycenter.barycenter import approximate_barycenter, barycenter_objective
from fairbarycenter.discrete_ot import DiscreteDistribution, w2_squared
from fairbarycenter.errors import DimensionMismatchError, InputError
from fairbarycenter.fairness_metrics import (
    ANCHOR_APPROXIMATE,
    ANCHOR_EXACT,
    FairnessReport,
    approximation_error,
    coupling_pushforward,
    evaluate,
    group_distributions,
    multiclass_dp_gap,
    pairwise_w2,
    per_coordinate_baseline,
    unfairness,
)
from fairbarycenter.synthetic import generate
from fairbarycenter.tab_postprocess import GroupedDataset, fit, transform_batch


def dataset_from_scenario(scenario: str, n: int, seed: int) -> GroupedDataset:
    frame = generate(scenario, n, seed)
    columns = [c for c in frame.columns if c.startswith("y")]
    labels = frame["label"].to_numpy() if "label" in frame.columns else None
    return GroupedDataset(frame[columns].to_numpy(), frame["group"].tolist(), labels)


def processed_groups(outputs: np.ndarray, groups) -> list:
    return group_distributions(outputs, groups)[1]


class TestUnfairness:
    """Test the weighted barycenter objective U."""

    def test_identical_groups(self):
        """Test identical groups are perfectly fair."""
        group = DiscreteDistribution.uniform([[0.0, 1.0], [2.0, 0.5]])
        result = unfairness([group, group])

        assert result.value == pytest.approx(0.0, abs=1e-9)
        assert result.anchor == ANCHOR_EXACT

    def test_point_masses(self):
        """Test delta_0 and delta_2 have U = 1."""
        groups = [DiscreteDistribution.uniform([[0.0]]), DiscreteDistribution.uniform([[2.0]])]
        assert unfairness(groups).value == pytest.approx(1.0, abs=1e-9)

    def test_exact_and_approximate_anchors(self):
        """Test the exact anchor gives at most the approximate one, which is within twice it."""
        rng = np.random.default_rng(3)
        groups = [DiscreteDistribution.uniform(rng.normal(size=(4, 2))) for _ in range(3)]
        exact = unfairness(groups)
        approximate = unfairness(groups, oracle_cap=1)

        assert exact.anchor == ANCHOR_EXACT
        assert approximate.anchor == ANCHOR_APPROXIMATE
        assert approximate.value == pytest.approx(
            barycenter_objective(approximate_barycenter(groups).barycenter, groups)
        )
        assert exact.value <= approximate.value + 1e-8
        assert approximate.value <= 2.0 * exact.value + 1e-9

    def test_zero_iff_same_multisets(self):
        """Test U vanishes exactly when the groups coincide."""
        points = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]])
        same = [DiscreteDistribution.uniform(points), DiscreteDistribution.uniform(points[[2, 0, 1]])]
        moved = [DiscreteDistribution.uniform(points), DiscreteDistribution.uniform(points + [0.0, 0.1])]

        assert unfairness(same).value == pytest.approx(0.0, abs=1e-9)
        assert unfairness(moved).value > 1e-4


class TestApproximationError:
    """Test the mean squared deviation R."""

    def test_no_change(self):
        """Test unchanged outputs have zero error."""
        outputs = np.random.default_rng(0).normal(size=(5, 3))
        assert approximation_error(outputs, outputs) == 0.0

    def test_single_pair(self):
        """Test (0, 0) against (3, 4)."""
        assert approximation_error(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]])) == 25.0

    def test_length_mismatch(self):
        """Test differing record counts are rejected."""
        with pytest.raises(InputError):
            approximation_error(np.zeros((2, 1)), np.zeros((3, 1)))


class TestPairwiseW2:
    """Test the matrix of pairwise distances."""

    def test_identical_groups(self):
        """Test identical groups give an all-zero matrix."""
        group = DiscreteDistribution.uniform([[0.0], [1.0]])
        assert np.allclose(pairwise_w2([group, group, group]), 0.0, atol=1e-12)

    def test_two_groups(self):
        """Test m = 2 is a single distance."""
        a = DiscreteDistribution.uniform([[0.0]])
        b = DiscreteDistribution.uniform([[3.0]])
        assert pairwise_w2([a, b]).tolist() == [[0.0, 9.0], [9.0, 0.0]]

    def test_triangle_inequality(self):
        """Test square roots of the entries satisfy the triangle inequality."""
        rng = np.random.default_rng(1)
        groups = [DiscreteDistribution.uniform(rng.normal(size=(4, 2)) * (s + 1)) for s in range(4)]
        root = np.sqrt(pairwise_w2(groups))
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    assert root[i, k] <= root[i, j] + root[j, k] + 1e-9


class TestMulticlassDPGap:
    """Test the demographic parity gap."""

    def test_single_group(self):
        """Test one group has no gap."""
        outputs = np.random.default_rng(2).normal(size=(10, 3))
        assert multiclass_dp_gap(outputs, ["a"] * 10) == 0.0

    def test_same_predictions(self):
        """Test identically distributed predictions have no gap."""
        outputs = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [0.0, 3.0]])
        assert multiclass_dp_gap(outputs, ["a", "a", "b", "b"]) == 0.0

    def test_extreme_disparity(self):
        """Test one group always class 0 and the other always class 1."""
        outputs = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        assert multiclass_dp_gap(outputs, ["a", "a", "b", "b"]) == 1.0

    def test_ties_go_to_lowest_class(self):
        """Test an exact tie predicts the lower class index."""
        outputs = np.array([[1.0, 1.0], [1.0, 0.0]])
        assert multiclass_dp_gap(outputs, ["a", "b"]) == 0.0

    def test_invariant_under_scaling(self):
        """Test positive scaling of every output leaves the gap unchanged."""
        data = dataset_from_scenario("multiclass", 50, seed=4)
        gap = multiclass_dp_gap(data.outputs, data.groups)
        assert multiclass_dp_gap(3.5 * data.outputs, data.groups) == gap

    def test_needs_two_classes(self):
        """Test a single output column is rejected."""
        with pytest.raises(DimensionMismatchError):
            multiclass_dp_gap(np.zeros((3, 1)), ["a", "b", "a"])


class TestPerCoordinateBaseline:
    """Test the coordinate-wise quantile averaging baseline."""

    def test_single_group(self):
        """Test one group with distinct values is unchanged."""
        outputs = np.random.default_rng(5).normal(size=(9, 2))
        assert np.array_equal(per_coordinate_baseline(GroupedDataset(outputs, ["g"] * 9)), outputs)

    def test_rank_averages(self):
        """Test {0, 1} and {2, 3} both map to {1, 2}."""
        data = GroupedDataset(np.array([[0.0], [1.0], [2.0], [3.0]]), ["a", "a", "b", "b"])
        assert per_coordinate_baseline(data).ravel().tolist() == [1.0, 2.0, 1.0, 2.0]

    def test_matches_tab_in_one_dimension(self):
        """Test TAB targets at alpha = 0 equal the baseline for k = 1 and equal group sizes."""
        rng = np.random.default_rng(6)
        for _ in range(5):
            outputs = np.concatenate([rng.normal(size=12), rng.normal(size=12) * 2.0 + 1.0])[:, None]
            data = GroupedDataset(outputs, ["a"] * 12 + ["b"] * 12)
            processed, _ = transform_batch(fit(data), data.outputs, data.groups, 0.0)

            assert np.allclose(processed, per_coordinate_baseline(data), atol=1e-8)

    def test_correlated_groups_separation(self):
        """Test the baseline aligns marginals but not the joint, while TAB aligns the joint."""
        data = dataset_from_scenario("figure1", 300, seed=7)
        original = pairwise_w2(processed_groups(data.outputs, data.groups))[0, 1]
        baseline = per_coordinate_baseline(data)

        for j in range(2):
            column = processed_groups(baseline[:, [j]], data.groups)
            assert w2_squared(column[0], column[1]) <= 1e-6
        assert pairwise_w2(processed_groups(baseline, data.groups))[0, 1] >= 0.5 * original

        tab, _ = transform_batch(fit(data), data.outputs, data.groups, 0.0)
        assert pairwise_w2(processed_groups(tab, data.groups))[0, 1] <= 0.05 * original


class TestCouplingPushforward:
    """Test plan pushforwards."""

    def test_requires_plans(self):
        """Test a post-processor without plans is refused."""
        data = GroupedDataset(np.array([[0.0], [1.0]]), ["a", "b"])
        fitted = fit(data)
        stripped = type(fitted)(
            dimension=fitted.dimension,
            group_ids=fitted.group_ids,
            group_weights=fitted.group_weights,
            supports=fitted.supports,
            targets=fitted.targets,
        )
        with pytest.raises(InputError):
            coupling_pushforward(stripped, "a")


class TestEvaluate:
    """Test full fairness reports."""

    def setup_method(self):
        """Set up a small biased dataset and its fit."""
        rng = np.random.default_rng(8)
        outputs = np.vstack([rng.normal(size=(6, 2)), rng.normal(size=(6, 2)) + [2.0, 0.0]])
        self.data = GroupedDataset(outputs, ["a"] * 6 + ["b"] * 6)
        self.fitted = fit(self.data)

    def test_unprocessed(self):
        """Test processed = original gives R = 0 and the input unfairness."""
        report = evaluate(self.data.outputs, self.data.outputs, self.data.groups, 1.0)
        expected = unfairness(processed_groups(self.data.outputs, self.data.groups))

        assert report.error_R == 0.0
        assert report.unfairness_U == pytest.approx(expected.value)
        assert report.anchor == ANCHOR_EXACT
        assert report.group_ids == ["a", "b"]

    def test_identical_processed_groups(self):
        """Test identical processed groups have U = 0."""
        block = np.random.default_rng(9).normal(size=(6, 2))
        processed = np.vstack([block, block])
        report = evaluate(self.data.outputs, processed, self.data.groups, 0.0)
        assert report.unfairness_U == pytest.approx(0.0, abs=1e-9)

    def test_error_non_increasing_in_alpha(self):
        """Test R decreases along the alpha grid while U does not."""
        reports = []
        for alpha in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
            processed, _ = transform_batch(self.fitted, self.data.outputs, self.data.groups, alpha)
            reports.append(evaluate(self.data.outputs, processed, self.data.groups, alpha))

        errors = [r.error_R for r in reports]
        assert all(b <= a + 1e-15 for a, b in zip(errors, errors[1:]))
        assert reports[0].unfairness_U <= reports[-1].unfairness_U

    def test_scalar_outputs_have_no_gap(self):
        """Test k = 1 reports no demographic parity gap."""
        outputs = np.arange(4.0)[:, None]
        report = evaluate(outputs, outputs, ["a", "a", "b", "b"], 1.0)
        assert report.dp_gap is None

    def test_approximate_anchor_above_cap(self):
        """Test U falls back to the approximate barycenter above the oracle cap."""
        report = evaluate(self.data.outputs, self.data.outputs, self.data.groups, 1.0, oracle_cap=10)
        assert report.anchor == ANCHOR_APPROXIMATE


class TestFairnessReport:
    """Test report validation."""

    def test_rejects_asymmetric_matrix(self):
        """Test the pairwise matrix must be symmetric."""
        with pytest.raises(ValidationError):
            FairnessReport(alpha=0.5, unfairness_U=0.1, error_R=0.2, pairwise_w2=[[0.0, 1.0], [2.0, 0.0]])

    def test_rejects_alpha_out_of_range(self):
        """Test alpha must lie in [0, 1]."""
        with pytest.raises(ValidationError):
            FairnessReport(alpha=1.5, unfairness_U=0.1, error_R=0.2, pairwise_w2=[[0.0]])


class TestSyntheticScenarios:
    """End-to-end parity checks on the synthetic scenarios."""

    def test_multiclass_parity_out_of_sample(self):
        """Test TAB at alpha = 0 removes most of the injected parity gap on held-out data."""
        fitted = fit(dataset_from_scenario("multiclass", 500, seed=11))
        held_out = dataset_from_scenario("multiclass", 2000, seed=12)

        biased = multiclass_dp_gap(held_out.outputs, held_out.groups)
        processed, flags = transform_batch(fitted, held_out.outputs, held_out.groups, 0.0)

        assert biased >= 0.3
        assert not flags.any()
        assert multiclass_dp_gap(processed, held_out.groups) <= 0.2 * biased

    def test_out_of_sample_parity_improves_with_data(self):
        """Test held-out groups end up closer when fitting on more data."""
        def held_out_distance(n: int, seed: int) -> float:
            fitted = fit(dataset_from_scenario("figure1", n, seed), bandwidth=0.04)
            held_out = dataset_from_scenario("figure1", 1000, seed + 1000)
            processed, _ = transform_batch(fitted, held_out.outputs, held_out.groups, 0.0)
            return float(pairwise_w2(processed_groups(processed, held_out.groups))[0, 1])

        small = np.mean([held_out_distance(100, seed) for seed in range(5)])
        large = np.mean([held_out_distance(1000, seed) for seed in range(5)])
        assert large < small
