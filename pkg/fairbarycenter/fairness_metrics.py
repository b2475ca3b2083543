"""Fairness and accuracy measures for post-processed outputs, plus the quantile baseline."""

import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .barycenter import (
    DEFAULT_ORACLE_CAP,
    approximate_barycenter,
    barycenter_objective,
    exact_barycenter_oracle,
    resolve_group_weights,
)
from .discrete_ot import DiscreteDistribution, w2_squared
from .errors import DimensionMismatchError, InputError, OracleCapExceededError
from .tab_postprocess import FittedPostprocessor, GroupedDataset

logger = logging.getLogger(__name__)

ANCHOR_EXACT = "exact"
ANCHOR_APPROXIMATE = "approximate"


class Unfairness(NamedTuple):
    """Weighted barycenter objective and which barycenter it was measured against."""
    value: float
    anchor: str


class FairnessReport(BaseModel):
    """Fairness and error of a set of processed outputs at one alpha."""

    alpha: float = Field(..., description="Interpolation weight")
    unfairness_U: float = Field(..., description="Weighted squared W2 to the barycenter")
    error_R: float = Field(..., description="Mean squared deviation from the original outputs")
    pairwise_w2: List[List[float]] = Field(..., description="Squared W2 between every pair of groups")
    dp_gap: Optional[float] = Field(None, description="Multi-class demographic parity gap")
    group_ids: List[str] = Field(default_factory=list, description="Group order of pairwise_w2")
    anchor: str = Field(ANCHOR_EXACT, description="Barycenter used for U: exact or approximate")
    method: str = Field("tab", description="Post-processing that produced the outputs")

    @field_validator('alpha')
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        """Validate alpha lies in [0, 1]."""
        if not 0.0 <= v <= 1.0:
            raise ValueError(f'Alpha must be in [0, 1], got {v}')
        return v

    @field_validator('unfairness_U', 'error_R')
    @classmethod
    def validate_nonnegative(cls, v: float) -> float:
        """Validate measures are nonnegative."""
        if v < 0.0:
            raise ValueError('Measures must be nonnegative')
        return v

    @field_validator('dp_gap')
    @classmethod
    def validate_gap(cls, v: Optional[float]) -> Optional[float]:
        """Validate the gap is a frequency difference."""
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError('dp_gap must be in [0, 1]')
        return v

    @field_validator('anchor')
    @classmethod
    def validate_anchor(cls, v: str) -> str:
        """Validate the anchor label."""
        if v not in (ANCHOR_EXACT, ANCHOR_APPROXIMATE):
            raise ValueError(f'Anchor must be {ANCHOR_EXACT} or {ANCHOR_APPROXIMATE}')
        return v

    @model_validator(mode="after")
    def validate_matrix(self) -> "FairnessReport":
        """The pairwise matrix is square, symmetric and zero on the diagonal."""
        matrix = np.asarray(self.pairwise_w2, dtype=np.float64)
        if matrix.size and (matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]):
            raise ValueError('pairwise_w2 must be a square matrix')
        if matrix.size:
            if np.max(np.abs(matrix - matrix.T)) > 1e-9:
                raise ValueError('pairwise_w2 must be symmetric')
            if np.any(np.diag(matrix) != 0.0):
                raise ValueError('pairwise_w2 must have a zero diagonal')
        return self


def group_distributions(
    outputs: np.ndarray, groups: Sequence[str]
) -> Tuple[List[str], List[DiscreteDistribution]]:
    """Empirical distribution of the outputs of every group, groups in lexicographic order."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2:
        raise DimensionMismatchError(f"Outputs must be an (n, k) array, got shape {outputs.shape}")
    group_array = np.array([str(g) for g in groups], dtype=object)
    if group_array.shape[0] != outputs.shape[0]:
        raise InputError(f"Got {group_array.shape[0]} group ids for {outputs.shape[0]} outputs")
    ids = sorted(set(group_array.tolist()))
    return ids, [DiscreteDistribution.uniform(outputs[group_array == g]) for g in ids]


def unfairness(
    groups: Sequence[DiscreteDistribution],
    weights: Optional[Sequence[float] | np.ndarray] = None,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
) -> Unfairness:
    """Weighted squared W2 from every group to their barycenter.

    The exact barycenter is used while the tuple count stays within oracle_cap,
    otherwise the pairwise approximation.
    """
    p = resolve_group_weights(groups, weights)
    try:
        reference = exact_barycenter_oracle(groups, p, oracle_cap)
        anchor = ANCHOR_EXACT
    except OracleCapExceededError:
        logger.warning("Exact barycenter is above the oracle cap; measuring U against the approximation")
        reference = approximate_barycenter(groups, p).barycenter
        anchor = ANCHOR_APPROXIMATE
    return Unfairness(barycenter_objective(reference, groups, p), anchor)


def approximation_error(original: np.ndarray, processed: np.ndarray) -> float:
    """Mean squared Euclidean deviation of processed outputs from the originals."""
    original = np.asarray(original, dtype=np.float64)
    processed = np.asarray(processed, dtype=np.float64)
    if original.shape != processed.shape:
        raise InputError(f"Shape mismatch: original {original.shape}, processed {processed.shape}")
    if original.shape[0] == 0:
        raise InputError("Cannot measure error on zero records")
    return float(np.mean(np.sum((original - processed) ** 2, axis=-1)))


def pairwise_w2(groups: Sequence[DiscreteDistribution]) -> np.ndarray:
    """Symmetric matrix of squared W2 distances between groups."""
    m = len(groups)
    matrix = np.zeros((m, m))
    for s in range(m):
        for t in range(s + 1, m):
            matrix[s, t] = matrix[t, s] = w2_squared(groups[s], groups[t])
    return matrix


def predicted_classes(outputs: np.ndarray) -> np.ndarray:
    """Argmax class of every output; ties go to the lowest index."""
    return np.argmax(np.asarray(outputs, dtype=np.float64), axis=1)


def multiclass_dp_gap(outputs: np.ndarray, groups: Sequence[str]) -> float:
    """Largest between-group difference in predicted-class frequency."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2 or outputs.shape[1] < 2:
        raise DimensionMismatchError("The demographic parity gap needs at least two output classes")
    group_array = np.array([str(g) for g in groups], dtype=object)
    if group_array.shape[0] != outputs.shape[0]:
        raise InputError(f"Got {group_array.shape[0]} group ids for {outputs.shape[0]} outputs")
    if outputs.shape[0] == 0:
        raise InputError("Cannot measure parity on zero records")

    classes = predicted_classes(outputs)
    frequencies = []
    for group in sorted(set(group_array.tolist())):
        members = classes[group_array == group]
        frequencies.append(np.bincount(members, minlength=outputs.shape[1]) / members.shape[0])
    table = np.vstack(frequencies)
    return float(np.max(table.max(axis=0) - table.min(axis=0)))


def _quantile_indices(ranks: np.ndarray, n_source: int, n_target: int) -> np.ndarray:
    # Q(r / n_source) = sorted[ceil(r * n_target / n_source) - 1], in exact integer arithmetic
    return -(-ranks * n_target // n_source) - 1


def per_coordinate_baseline(data: GroupedDataset) -> np.ndarray:
    """Coordinate-wise quantile averaging across groups.

    Each coordinate of a record is replaced by the p-weighted average of every
    group's empirical quantile at the record's empirical CDF level in its own
    group. Returns outputs aligned with the dataset records.
    """
    parts = data.partition()
    group_ids = list(parts)
    sizes = {g: parts[g].shape[0] for g in group_ids}
    total = sum(sizes.values())
    weights = {g: sizes[g] / total for g in group_ids}
    processed = np.empty_like(data.outputs)

    for j in range(data.dimension):
        ordered = {g: np.sort(data.outputs[parts[g], j]) for g in group_ids}
        for group in group_ids:
            values = data.outputs[parts[group], j]
            ranks = np.searchsorted(ordered[group], values, side="right").astype(np.int64)
            mapped = np.zeros(values.shape[0])
            for other in group_ids:
                idx = _quantile_indices(ranks, sizes[group], sizes[other])
                mapped += weights[other] * ordered[other][idx]
            processed[parts[group], j] = mapped
    return processed


def coupling_pushforward(fitted: FittedPostprocessor, group: str) -> DiscreteDistribution:
    """Distribution a group's plan delivers onto the barycenter supports."""
    fitted.group_index(group)
    if fitted.plans is None or fitted.barycenter is None:
        raise InputError("Coupling pushforwards need a post-processor fitted in this session")
    mass = fitted.plans[group].gamma.sum(axis=0)
    return DiscreteDistribution(fitted.barycenter.supports, mass / mass.sum())


def evaluate(
    original: np.ndarray,
    processed: np.ndarray,
    groups: Sequence[str],
    alpha: float,
    oracle_cap: int = DEFAULT_ORACLE_CAP,
    method: str = "tab",
) -> FairnessReport:
    """Fairness report of processed outputs against the originals."""
    original = np.asarray(original, dtype=np.float64)
    processed = np.asarray(processed, dtype=np.float64)
    if original.shape != processed.shape:
        raise InputError(f"Row mismatch: original {original.shape}, processed {processed.shape}")

    ids, distributions = group_distributions(processed, groups)
    u = unfairness(distributions, oracle_cap=oracle_cap)
    matrix = pairwise_w2(distributions)
    gap = multiclass_dp_gap(processed, groups) if processed.shape[1] >= 2 else None
    report = FairnessReport(
        alpha=alpha,
        unfairness_U=max(u.value, 0.0),
        error_R=approximation_error(original, processed),
        pairwise_w2=matrix.tolist(),
        dp_gap=gap,
        group_ids=ids,
        anchor=u.anchor,
        method=method,
    )
    logger.info(
        f"alpha={alpha}: U={report.unfairness_U:.6g} ({u.anchor}), R={report.error_R:.6g}, "
        f"dp_gap={'n/a' if gap is None else f'{gap:.4f}'}"
    )
    return report

