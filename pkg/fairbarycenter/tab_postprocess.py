"""Post-processing by transporting group outputs to the approximate barycenter.

`fit` builds the approximate barycenter of the per-group output clouds, solves
one transport plan per group towards it and stores a target for every training
output. Training outputs are moved towards their stored target; unseen outputs
towards a kernel-regressed target.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .barycenter import approximate_barycenter
from .config import KernelConfig, Mode, Notion, NotionKind
from .discrete_ot import (
    DEFAULT_MAX_ITERATIONS,
    DiscreteDistribution,
    TransportPlan,
    barycentric_map,
    sample_map,
    solve_transport,
)
from .errors import DimensionMismatchError, EmptyCellError, InputError, NotInSampleError, UnknownGroupError
from .kernel_extrapolation import KernelRegressor, regress

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _canonical_key(output: np.ndarray) -> bytes:
    # adding 0.0 folds -0.0 into 0.0
    return (np.ascontiguousarray(output, dtype=np.float64) + 0.0).tobytes()


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    """Model outputs with their group ids and optional class labels."""

    outputs: np.ndarray
    groups: Tuple[str, ...]
    labels: Optional[np.ndarray] = None
    declared_groups: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        outputs = np.array(self.outputs, dtype=np.float64, copy=True)
        if outputs.ndim != 2 or outputs.shape[1] == 0:
            raise DimensionMismatchError(f"Outputs must be an (n, k) array, got shape {outputs.shape}")
        if not np.all(np.isfinite(outputs)):
            raise InputError("Outputs must be finite")
        groups = tuple(str(g) for g in self.groups)
        if len(groups) != outputs.shape[0]:
            raise InputError(f"Got {len(groups)} group ids for {outputs.shape[0]} outputs")
        outputs.setflags(write=False)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "groups", groups)

        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True).ravel()
            if labels.shape[0] != outputs.shape[0]:
                raise InputError(f"Got {labels.shape[0]} labels for {outputs.shape[0]} outputs")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if self.declared_groups is not None:
            object.__setattr__(self, "declared_groups", tuple(sorted(str(g) for g in self.declared_groups)))

    def __len__(self) -> int:
        return int(self.outputs.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.outputs.shape[1])

    def group_ids(self) -> Tuple[str, ...]:
        """Group ids in lexicographic order."""
        if self.declared_groups is not None:
            return self.declared_groups
        return tuple(sorted(set(self.groups)))

    def partition(self) -> Dict[str, np.ndarray]:
        """Record indices of every group, in data order."""
        group_array = np.array(self.groups, dtype=object)
        parts = {}
        for group in self.group_ids():
            indices = np.flatnonzero(group_array == group)
            if indices.shape[0] == 0:
                raise InputError(f"Group '{group}' has no records")
            parts[group] = indices
        unknown = set(self.groups) - set(parts)
        if unknown:
            raise UnknownGroupError(f"Records reference undeclared groups: {sorted(unknown)}")
        return parts

    def subset(self, mask: np.ndarray) -> "GroupedDataset":
        """Records selected by a boolean mask, keeping the declared groups."""
        indices = np.flatnonzero(mask)
        return GroupedDataset(
            self.outputs[indices],
            tuple(self.groups[i] for i in indices),
            None if self.labels is None else self.labels[indices],
            self.group_ids(),
        )


@dataclass(frozen=True, eq=False)
class FittedPostprocessor:
    """Per-group training supports and their transport targets on the approximate barycenter."""

    dimension: int
    group_ids: Tuple[str, ...]
    group_weights: np.ndarray
    supports: Dict[str, np.ndarray]
    targets: Dict[str, np.ndarray]
    mode: Mode = Mode.BARYCENTRIC
    seed: int = 0
    bandwidth: float = 0.04
    format_version: int = FORMAT_VERSION
    plans: Optional[Dict[str, TransportPlan]] = field(default=None, compare=False, repr=False)
    barycenter: Optional[DiscreteDistribution] = field(default=None, compare=False, repr=False)
    _lookup: Dict[str, Dict[bytes, int]] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if set(self.supports) != set(self.group_ids) or set(self.targets) != set(self.group_ids):
            raise InputError("Supports and targets must be given for exactly the fitted groups")
        if self.bandwidth <= 0.0 or not math.isfinite(self.bandwidth):
            raise InputError(f"Bandwidth must be positive, got {self.bandwidth!r}")
        lookup = {}
        for group in self.group_ids:
            supports = self.supports[group]
            targets = self.targets[group]
            if supports.shape != targets.shape or supports.shape[1] != self.dimension:
                raise DimensionMismatchError(
                    f"Group '{group}': supports {supports.shape} and targets {targets.shape} "
                    f"do not match dimension {self.dimension}"
                )
            keys: Dict[bytes, int] = {}
            for i, row in enumerate(supports):
                keys.setdefault(_canonical_key(row), i)
            lookup[group] = keys
        object.__setattr__(self, "_lookup", lookup)

    def weight_of(self, group: str) -> float:
        return float(self.group_weights[self.group_index(group)])

    def group_index(self, group: str) -> int:
        try:
            return self.group_ids.index(group)
        except ValueError:
            raise UnknownGroupError(f"Unknown group '{group}'. Fitted groups: {list(self.group_ids)}")

    def find_in_sample(self, group: str, output: np.ndarray) -> Optional[int]:
        """Index of the first training support equal to output, or None."""
        self.group_index(group)
        return self._lookup[group].get(_canonical_key(output))

    def regressor(self, group: str, bandwidth: Optional[float] = None) -> KernelRegressor:
        self.group_index(group)
        h = self.bandwidth if bandwidth is None else bandwidth
        return KernelRegressor(self.supports[group], self.targets[group], h)


def fit(
    data: GroupedDataset,
    mode: Mode = Mode.BARYCENTRIC,
    seed: int = 0,
    bandwidth: Optional[float] = None,
    kernel_config: Optional[KernelConfig] = None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> FittedPostprocessor:
    """Fit per-group transports to the approximate barycenter."""
    mode = Mode(mode)
    parts = data.partition()
    group_ids = tuple(parts)
    supports = {g: data.outputs[parts[g]] for g in group_ids}
    logger.info(
        f"Fitting {mode.value} post-processor on {len(data)} records, "
        f"{len(group_ids)} group(s), k={data.dimension}"
    )

    distributions = [DiscreteDistribution.uniform(supports[g]) for g in group_ids]
    result = approximate_barycenter(distributions)
    barycenter = result.barycenter

    plans = {}
    targets = {}
    for index, group in enumerate(group_ids):
        plan = solve_transport(distributions[index], barycenter, max_iterations=max_iterations)
        plans[group] = plan
        if mode == Mode.BARYCENTRIC:
            mapped = barycentric_map(plan, barycenter)
        else:
            mapped = sample_map(plan, barycenter, seed, stream=(index,))
        mapped.setflags(write=False)
        targets[group] = mapped
        logger.debug(f"Group '{group}': n={supports[group].shape[0]}, W2^2 to barycenter={plan.cost!r}")

    if bandwidth is None:
        bandwidth = (kernel_config or KernelConfig()).default_bandwidth(data.dimension)

    return FittedPostprocessor(
        dimension=data.dimension,
        group_ids=group_ids,
        group_weights=result.group_weights,
        supports=supports,
        targets=targets,
        mode=mode,
        seed=seed,
        bandwidth=float(bandwidth),
        plans=plans,
        barycenter=barycenter,
    )


def check_alpha(alpha: float) -> float:
    if not (math.isfinite(alpha) and 0.0 <= alpha <= 1.0):
        raise InputError(f"Alpha must be in [0, 1], got {alpha!r}")
    return float(alpha)


def interpolate(original: np.ndarray, target: np.ndarray, alpha: float) -> np.ndarray:
    """sqrt(alpha) * original + (1 - sqrt(alpha)) * target."""
    root = math.sqrt(check_alpha(alpha))
    return root * np.asarray(original, dtype=np.float64) + (1.0 - root) * np.asarray(target, dtype=np.float64)


def transform_in_sample(
    fitted: FittedPostprocessor,
    group: str,
    alpha: float,
    index: Optional[int] = None,
    output: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Move a training output towards its stored target."""
    check_alpha(alpha)
    if index is None:
        if output is None:
            raise InputError("Either a record index or an output vector is required")
        index = fitted.find_in_sample(group, np.asarray(output, dtype=np.float64))
        if index is None:
            raise NotInSampleError(
                f"Output is not a training support of group '{group}'; use transform_out_of_sample"
            )
    fitted.group_index(group)
    supports = fitted.supports[group]
    if not 0 <= index < supports.shape[0]:
        raise NotInSampleError(f"Group '{group}' has no training record {index}")
    return interpolate(supports[index], fitted.targets[group][index], alpha)


def transform_out_of_sample(
    fitted: FittedPostprocessor,
    output: np.ndarray,
    group: str,
    alpha: float,
    h: Optional[float] = None,
) -> np.ndarray:
    """Move an unseen output towards its kernel-regressed target."""
    check_alpha(alpha)
    output = np.asarray(output, dtype=np.float64).ravel()
    if output.shape[0] != fitted.dimension:
        raise DimensionMismatchError(f"Output has dimension {output.shape[0]}, model expects {fitted.dimension}")
    if not np.all(np.isfinite(output)):
        raise InputError("Output must be finite")
    target = regress(output, fitted.regressor(group, h))
    return interpolate(output, target, alpha)


def transform_record(
    fitted: FittedPostprocessor,
    output: np.ndarray,
    group: str,
    alpha: float,
    h: Optional[float] = None,
) -> Tuple[np.ndarray, bool]:
    """In-sample transform when the output is a training support, else out-of-sample."""
    index = fitted.find_in_sample(group, np.asarray(output, dtype=np.float64))
    if index is not None:
        return transform_in_sample(fitted, group, alpha, index=index), True
    return transform_out_of_sample(fitted, output, group, alpha, h), False


def transform_batch(
    fitted: FittedPostprocessor,
    outputs: np.ndarray,
    groups: Sequence[str],
    alpha: float,
    h: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Transform every record, returning the processed outputs and in-sample flags."""
    check_alpha(alpha)
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2 or outputs.shape[1] != fitted.dimension:
        raise DimensionMismatchError(
            f"Outputs have shape {outputs.shape}, model expects k={fitted.dimension}"
        )
    processed = np.empty_like(outputs)
    flags = np.zeros(outputs.shape[0], dtype=bool)
    for i, (row, group) in enumerate(zip(outputs, groups)):
        processed[i], flags[i] = transform_record(fitted, row, str(group), alpha, h)
    return processed, flags


@dataclass(frozen=True, eq=False)
class EqualizedPostprocessor:
    """One post-processor per class label for distributionally equal odds or opportunity."""

    notion: Notion
    postprocessors: Dict[int, FittedPostprocessor]

    def __post_init__(self) -> None:
        if self.notion.kind == NotionKind.PLAIN:
            raise InputError("Equalized post-processors need the odds or opportunity notion")
        if self.notion.kind == NotionKind.OPPORTUNITY and list(self.postprocessors) != [self.notion.label]:
            raise InputError(
                f"Opportunity for class {self.notion.label} needs exactly that label, "
                f"got {sorted(self.postprocessors)}"
            )
        if not self.postprocessors:
            raise InputError("At least one label post-processor is required")

    @property
    def dimension(self) -> int:
        return next(iter(self.postprocessors.values())).dimension


def fit_equalized(
    data: GroupedDataset,
    notion: Notion,
    mode: Mode = Mode.BARYCENTRIC,
    seed: int = 0,
    bandwidth: Optional[float] = None,
    kernel_config: Optional[KernelConfig] = None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> EqualizedPostprocessor:
    """Fit a separate post-processor on the records of each relevant class label."""
    if data.labels is None:
        raise InputError("Equalized post-processing needs class labels")
    if notion.kind == NotionKind.PLAIN:
        raise InputError("Use fit() for the plain notion")

    group_ids = data.group_ids()
    labels = [notion.label] if notion.kind == NotionKind.OPPORTUNITY else sorted(set(data.labels.tolist()))
    group_array = np.array(data.groups, dtype=object)

    postprocessors = {}
    for label in labels:
        in_label = data.labels == label
        for group in group_ids:
            if not np.any(in_label & (group_array == group)):
                raise EmptyCellError(f"No records for group '{group}' with label {label}")
        logger.info(f"Fitting label {label} post-processor on {int(in_label.sum())} records")
        postprocessors[int(label)] = fit(
            data.subset(in_label), mode, seed, bandwidth, kernel_config, max_iterations
        )
    return EqualizedPostprocessor(notion, postprocessors)


def transform_equalized(
    eq: EqualizedPostprocessor,
    output: np.ndarray,
    group: str,
    predicted_label: int,
    alpha: float,
    h: Optional[float] = None,
) -> np.ndarray:
    """Route a record to the post-processor of its predicted label."""
    processed, _ = transform_equalized_record(eq, output, group, predicted_label, alpha, h)
    return processed


def transform_equalized_record(
    eq: EqualizedPostprocessor,
    output: np.ndarray,
    group: str,
    predicted_label: int,
    alpha: float,
    h: Optional[float] = None,
) -> Tuple[np.ndarray, bool]:
    check_alpha(alpha)
    fitted = eq.postprocessors.get(int(predicted_label))
    if fitted is None:
        if eq.notion.kind == NotionKind.OPPORTUNITY:
            return np.array(output, dtype=np.float64, copy=True), False
        raise InputError(f"No post-processor for label {predicted_label}; fitted labels {sorted(eq.postprocessors)}")
    return transform_record(fitted, output, group, alpha, h)


def transform_equalized_batch(
    eq: EqualizedPostprocessor,
    outputs: np.ndarray,
    groups: Sequence[str],
    alpha: float,
    h: Optional[float] = None,
    predicted_labels: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Equalized transform of every record; predictions default to the argmax of each output."""
    check_alpha(alpha)
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2 or outputs.shape[1] != eq.dimension:
        raise DimensionMismatchError(f"Outputs have shape {outputs.shape}, model expects k={eq.dimension}")
    if predicted_labels is None:
        predicted_labels = np.argmax(outputs, axis=1).tolist()
    processed = np.empty_like(outputs)
    flags = np.zeros(outputs.shape[0], dtype=bool)
    for i, (row, group, label) in enumerate(zip(outputs, groups, predicted_labels)):
        processed[i], flags[i] = transform_equalized_record(eq, row, str(group), int(label), alpha, h)
    return processed, flags


def in_sample_outputs(fitted: FittedPostprocessor, alpha: float) -> List[np.ndarray]:
    """Processed training outputs of every group, in fitted group order."""
    check_alpha(alpha)
    return [interpolate(fitted.supports[g], fitted.targets[g], alpha) for g in fitted.group_ids]
