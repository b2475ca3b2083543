"""Batch runs behind the CLI subcommands."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import AppConfig, NotionKind, RunConfig
from .errors import DimensionMismatchError, SchemaError
from .fairness_metrics import FairnessReport, evaluate, per_coordinate_baseline
from .storage import (
    GROUP_COLUMN,
    IN_SAMPLE_COLUMN,
    Postprocessor,
    dataset_from_frame,
    format_float,
    ingest_csv,
    load_model,
    read_frame,
    save_model,
    write_frame,
    write_reports,
)
from .synthetic import generate
from .tab_postprocess import (
    EqualizedPostprocessor,
    FittedPostprocessor,
    GroupedDataset,
    fit,
    fit_equalized,
    transform_batch,
    transform_equalized_batch,
)

logger = logging.getLogger(__name__)

PARETO_COLUMNS = ["method", "alpha", "U", "R", "dp_gap", "anchor"]


@dataclass
class FitSummary:
    """What a fit run reports back to the user."""
    label: Optional[int]
    group_sizes: Dict[str, int]
    group_weights: Dict[str, float]
    psi: float


@dataclass
class FitRun:
    summaries: List[FitSummary] = field(default_factory=list)
    wall_time: float = 0.0


def _require(path: Optional[Path], name: str) -> Path:
    if path is None:
        raise SchemaError(f"Missing required --{name} path")
    return path


def _summarise(fitted: FittedPostprocessor, label: Optional[int]) -> FitSummary:
    plans = fitted.plans or {}
    psi = float(sum(fitted.weight_of(g) * plans[g].cost for g in fitted.group_ids if g in plans))
    return FitSummary(
        label=label,
        group_sizes={g: int(fitted.supports[g].shape[0]) for g in fitted.group_ids},
        group_weights={g: fitted.weight_of(g) for g in fitted.group_ids},
        psi=psi,
    )


def fit_postprocessor(data: GroupedDataset, config: RunConfig, app: AppConfig) -> Postprocessor:
    if config.notion.kind == NotionKind.PLAIN:
        return fit(data, config.mode, config.seed, config.bandwidth, app.kernel, app.solver.max_iterations)
    return fit_equalized(
        data, config.notion, config.mode, config.seed, config.bandwidth, app.kernel, app.solver.max_iterations
    )


def run_fit(config: RunConfig, app: AppConfig) -> FitRun:
    """Fit a post-processor on the input CSV and write its model document."""
    started = time.perf_counter()
    data = ingest_csv(_require(config.input, "input"))
    postprocessor = fit_postprocessor(data, config, app)
    save_model(postprocessor, _require(config.model, "model"))

    run = FitRun()
    if isinstance(postprocessor, EqualizedPostprocessor):
        for label in sorted(postprocessor.postprocessors):
            run.summaries.append(_summarise(postprocessor.postprocessors[label], label))
    else:
        run.summaries.append(_summarise(postprocessor, None))
    run.wall_time = time.perf_counter() - started
    logger.info(f"Fit finished in {run.wall_time:.3f}s")
    return run


def apply_postprocessor(
    postprocessor: Postprocessor,
    data: GroupedDataset,
    alpha: float,
    bandwidth: Optional[float],
) -> Tuple[np.ndarray, np.ndarray]:
    """Processed outputs and in-sample flags for every record of data."""
    if postprocessor.dimension != data.dimension:
        raise DimensionMismatchError(f"Model expects k={postprocessor.dimension}, data has k={data.dimension}")
    if isinstance(postprocessor, EqualizedPostprocessor):
        return transform_equalized_batch(postprocessor, data.outputs, data.groups, alpha, bandwidth)
    return transform_batch(postprocessor, data.outputs, data.groups, alpha, bandwidth)


def run_transform(config: RunConfig, app: AppConfig) -> pd.DataFrame:
    """Post-process the input CSV with a saved model and write the result."""
    postprocessor = load_model(_require(config.model, "model"))
    frame, columns = read_frame(_require(config.input, "input"))
    data = dataset_from_frame(frame, columns)
    processed, flags = apply_postprocessor(postprocessor, data, config.alpha, config.bandwidth)

    result = frame.copy()
    for j, column in enumerate(columns):
        result[column] = processed[:, j]
    result[IN_SAMPLE_COLUMN] = flags
    write_frame(result, _require(config.output, "output"))
    logger.info(
        f"Transformed {len(data)} records at alpha={config.alpha}: "
        f"{int(flags.sum())} in-sample, {int((~flags).sum())} out-of-sample"
    )
    return result


def run_evaluate(
    original_csv: Path,
    processed_csv: Path,
    config: RunConfig,
    app: AppConfig,
) -> FairnessReport:
    """Compare processed outputs with the originals and write the report."""
    original_frame, original_columns = read_frame(original_csv)
    processed_frame, processed_columns = read_frame(processed_csv)
    original = dataset_from_frame(original_frame, original_columns)
    processed = dataset_from_frame(processed_frame, processed_columns)
    if len(original) != len(processed) or original.dimension != processed.dimension:
        raise SchemaError(
            f"Row mismatch: original has {len(original)} rows (k={original.dimension}), "
            f"processed has {len(processed)} rows (k={processed.dimension})"
        )
    if original.groups != processed.groups:
        raise SchemaError("Original and processed files disagree on the group column")

    report = evaluate(original.outputs, processed.outputs, processed.groups, config.alpha, config.oracle_cap)
    if config.output is not None:
        write_reports([report], config.output)
    return report


def _pareto_row(report: FairnessReport) -> Dict[str, Union[str, float]]:
    return {
        "method": report.method,
        "alpha": report.alpha,
        "U": report.unfairness_U,
        "R": report.error_R,
        "dp_gap": "" if report.dp_gap is None else format_float(report.dp_gap),
        "anchor": report.anchor,
    }


def run_sweep(config: RunConfig, app: AppConfig) -> pd.DataFrame:
    """Evaluate the saved model over the alpha grid and write a Pareto CSV."""
    postprocessor = load_model(_require(config.model, "model"))
    data = ingest_csv(_require(config.input, "input"))

    rows = []
    for alpha in config.alphas:
        processed, _ = apply_postprocessor(postprocessor, data, alpha, config.bandwidth)
        rows.append(_pareto_row(evaluate(data.outputs, processed, data.groups, alpha, config.oracle_cap)))
    if config.baseline:
        baseline = per_coordinate_baseline(data)
        rows.append(
            _pareto_row(evaluate(data.outputs, baseline, data.groups, 0.0, config.oracle_cap, method="baseline"))
        )

    frame = pd.DataFrame(rows, columns=PARETO_COLUMNS)
    if config.output is not None:
        write_frame(frame, config.output)
    return frame


def run_synth(scenario: str, n: int, seed: int, output: Optional[Path]) -> pd.DataFrame:
    """Generate a synthetic scenario and write it as CSV."""
    frame = generate(scenario, n, seed)
    if output is not None:
        write_frame(frame, output)
        logger.info(f"Wrote {frame.shape[0]} records ({frame[GROUP_COLUMN].nunique()} groups) to {output}")
    return frame
