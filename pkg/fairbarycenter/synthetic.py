"""Synthetic grouped model outputs for experiments and tests."""

import logging
from typing import Callable, Dict

import numpy as np
import pandas as pd
from scipy.special import expit

from .errors import InputError
from .storage import GROUP_COLUMN, LABEL_COLUMN

logger = logging.getLogger(__name__)

MIN_RECORDS_PER_GROUP = 10
GROUP_IDS = ("0", "1")
REPRESENTATION_DIMENSION = 32
REPRESENTATION_SHIFTED = 8


def _frame(outputs: Dict[str, np.ndarray], labels: Dict[str, np.ndarray] | None = None) -> pd.DataFrame:
    parts = []
    for group in GROUP_IDS:
        block = pd.DataFrame(outputs[group], columns=[f"y{j}" for j in range(outputs[group].shape[1])])
        block.insert(0, GROUP_COLUMN, group)
        if labels is not None:
            block[LABEL_COLUMN] = labels[group]
        parts.append(block)
    return pd.concat(parts, ignore_index=True)


def correlated(n: int, rng: np.random.Generator) -> pd.DataFrame:
    """Two 2-D groups with N(0, 1) marginals and correlation +0.9 versus -0.9."""
    outputs = {}
    for group, rho in zip(GROUP_IDS, (0.9, -0.9)):
        cov = np.array([[1.0, rho], [rho, 1.0]])
        outputs[group] = rng.multivariate_normal(np.zeros(2), cov, size=n)
    return _frame(outputs)


def multiclass(n: int, rng: np.random.Generator) -> pd.DataFrame:
    """Three-class scores whose class priors depend on the group."""
    priors = {"0": [0.6, 0.3, 0.1], "1": [0.1, 0.3, 0.6]}
    outputs, labels = {}, {}
    for group in GROUP_IDS:
        y = rng.choice(3, size=n, p=priors[group])
        outputs[group] = 2.0 * np.eye(3)[y] + rng.normal(0.0, 0.8, size=(n, 3))
        labels[group] = y
    return _frame(outputs, labels)


def multilabel(n: int, rng: np.random.Generator) -> pd.DataFrame:
    """Four sigmoid scores with group-shifted logits."""
    shifts = {"0": np.array([1.0, 0.0, -1.0, 0.5]), "1": np.array([-1.0, 0.0, 1.0, -0.5])}
    outputs, labels = {}, {}
    for group in GROUP_IDS:
        logits = rng.normal(0.0, 1.0, size=(n, 4)) + shifts[group]
        outputs[group] = expit(logits + rng.normal(0.0, 0.3, size=(n, 4)))
        labels[group] = np.argmax(logits, axis=1)
    return _frame(outputs, labels)


def representation(n: int, rng: np.random.Generator) -> pd.DataFrame:
    """32-d embeddings whose leading coordinates carry the group, labelled by a group-free direction."""
    shift = np.zeros(REPRESENTATION_DIMENSION)
    shift[:REPRESENTATION_SHIFTED] = 1.0
    outputs, labels = {}, {}
    for group, sign in zip(GROUP_IDS, (1.0, -1.0)):
        embedding = sign * shift + rng.normal(0.0, 0.5, size=(n, REPRESENTATION_DIMENSION))
        outputs[group] = embedding
        labels[group] = (embedding[:, REPRESENTATION_SHIFTED:].sum(axis=1) > 0.0).astype(np.int64)
    return _frame(outputs, labels)


SCENARIOS: Dict[str, Callable[[int, np.random.Generator], pd.DataFrame]] = {
    "figure1": correlated,
    "correlated": correlated,
    "multiclass": multiclass,
    "multilabel": multilabel,
    "representation": representation,
}


def generate(scenario: str, n: int, seed: int) -> pd.DataFrame:
    """n records per group of the named scenario, deterministic in seed."""
    if scenario not in SCENARIOS:
        raise InputError(f"Unknown scenario '{scenario}'. Valid scenarios: {sorted(SCENARIOS)}")
    if n < MIN_RECORDS_PER_GROUP:
        raise InputError(f"Need at least {MIN_RECORDS_PER_GROUP} records per group, got {n}")
    logger.info(f"Generating scenario '{scenario}' with {n} records per group, seed={seed}")
    return SCENARIOS[scenario](n, np.random.default_rng(seed))
