"""Nadaraya-Watson extension of a per-group transport mapping to unseen outputs."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import DimensionMismatchError, InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class KernelRegressor:
    """Gaussian kernel regression from training supports to their transport targets."""

    train_points: np.ndarray
    targets: np.ndarray
    bandwidth: float

    def __post_init__(self) -> None:
        points = np.array(self.train_points, dtype=np.float64, copy=True)
        targets = np.array(self.targets, dtype=np.float64, copy=True)
        if points.ndim != 2 or targets.ndim != 2 or points.shape[0] == 0:
            raise InputError("Training points and targets must be non-empty 2-D arrays")
        if points.shape[0] != targets.shape[0]:
            raise InputError(
                f"Got {points.shape[0]} training points but {targets.shape[0]} targets"
            )
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0.0:
            raise InputError(f"Bandwidth must be finite and positive, got {self.bandwidth!r}")
        points.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "train_points", points)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def dimension(self) -> int:
        return int(self.train_points.shape[1])

    def log_kernel(self, query: np.ndarray) -> np.ndarray:
        """Unnormalised log-weights -||query - x_i||^2 / (2 h^2)."""
        squared = np.sum((self.train_points - query) ** 2, axis=1)
        return -squared / (2.0 * self.bandwidth**2)


def _as_query(query: np.ndarray, regressor: KernelRegressor) -> np.ndarray:
    query = np.asarray(query, dtype=np.float64).ravel()
    if query.shape[0] != regressor.dimension:
        raise DimensionMismatchError(
            f"Query has dimension {query.shape[0]}, regressor expects {regressor.dimension}"
        )
    if not np.all(np.isfinite(query)):
        raise InputError("Query must be finite")
    return query


def kernel_weights(query: np.ndarray, regressor: KernelRegressor) -> np.ndarray:
    """Normalised Gaussian kernel weights of the training points for one query."""
    query = _as_query(query, regressor)
    # softmax subtracts the max log-weight, so the nearest point never underflows
    return softmax(regressor.log_kernel(query))


def is_degenerate(weights: np.ndarray) -> bool:
    """True when all but one weight underflowed to exactly zero."""
    return weights.shape[0] > 1 and int(np.count_nonzero(weights)) == 1


def regress(query: np.ndarray, regressor: KernelRegressor) -> np.ndarray:
    """Kernel-weighted average of the targets at the query point."""
    weights = kernel_weights(query, regressor)
    if is_degenerate(weights):
        nearest = int(np.argmax(weights))
        logger.debug(f"Kernel weights collapsed onto training point {nearest}; using its target")
        return regressor.targets[nearest].copy()
    return weights @ regressor.targets
