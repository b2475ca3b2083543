"""CSV ingestion and model/report documents.

CSV files carry a `group` column, output columns `y0..y{k-1}` and an optional
integer `label` column. Floats are written as shortest round-trip decimals so
files and model documents reproduce the exact doubles they were built from.
"""

import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .config import Mode, Notion, NotionKind
from .errors import SchemaError
from .fairness_metrics import FairnessReport
from .tab_postprocess import FORMAT_VERSION, EqualizedPostprocessor, FittedPostprocessor, GroupedDataset

logger = logging.getLogger(__name__)

GROUP_COLUMN = "group"
LABEL_COLUMN = "label"
IN_SAMPLE_COLUMN = "in_sample"
OUTPUT_COLUMN = re.compile(r"^y(\d+)$")

Postprocessor = Union[FittedPostprocessor, EqualizedPostprocessor]


def format_float(value: float) -> str:
    """Shortest decimal that parses back to the same double."""
    return repr(float(value))


def read_frame(path: Union[str, Path]) -> Tuple[pd.DataFrame, List[str]]:
    """Read a CSV as strings and return it with its ordered output columns."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"Input file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(f"Input file is empty: {path}") from e

    if frame.shape[0] == 0:
        raise SchemaError(f"Input file has no data rows: {path}")
    if GROUP_COLUMN not in frame.columns:
        raise SchemaError(f"Missing required column '{GROUP_COLUMN}' in {path}")

    indices = sorted(int(m.group(1)) for c in frame.columns if (m := OUTPUT_COLUMN.match(str(c))))
    if not indices:
        raise SchemaError(f"No output columns y0..y{{k-1}} in {path}")
    if indices != list(range(len(indices))):
        raise SchemaError(f"Output columns must be y0..y{len(indices) - 1} without gaps, got {indices}")
    return frame, [f"y{i}" for i in indices]


def _parse_column(frame: pd.DataFrame, column: str, kind: type) -> np.ndarray:
    values = []
    for row, text in enumerate(frame[column].tolist()):
        line = row + 2
        try:
            value = kind(text.strip())
        except ValueError:
            raise SchemaError(f"Row {line}, column '{column}': not a valid {kind.__name__}: {text!r}")
        if kind is float and not math.isfinite(value):
            raise SchemaError(f"Row {line}, column '{column}': non-finite value {text!r}")
        values.append(value)
    return np.array(values, dtype=np.float64 if kind is float else np.int64)


def dataset_from_frame(frame: pd.DataFrame, output_columns: Sequence[str]) -> GroupedDataset:
    outputs = np.column_stack([_parse_column(frame, c, float) for c in output_columns])
    groups = tuple(str(g) for g in frame[GROUP_COLUMN].tolist())
    if any(g == "" for g in groups):
        raise SchemaError("Group ids must not be empty")
    labels = _parse_column(frame, LABEL_COLUMN, int) if LABEL_COLUMN in frame.columns else None
    return GroupedDataset(outputs, groups, labels)


def ingest_csv(path: Union[str, Path]) -> GroupedDataset:
    """Load a grouped dataset from CSV, inferring k from the header."""
    frame, columns = read_frame(path)
    data = dataset_from_frame(frame, columns)
    logger.info(f"Loaded {len(data)} records, k={data.dimension}, groups={list(data.group_ids())} from {path}")
    return data


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> None:
    """Write a CSV with shortest round-trip float formatting."""
    out = frame.copy()
    for column in out.columns:
        if pd.api.types.is_bool_dtype(out[column]):
            out[column] = out[column].map(lambda flag: "true" if flag else "false")
        elif pd.api.types.is_float_dtype(out[column]):
            out[column] = out[column].map(format_float)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        out.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise SchemaError(f"Cannot write {path}: {e}") from e


def dataset_to_frame(data: GroupedDataset) -> pd.DataFrame:
    frame = pd.DataFrame({GROUP_COLUMN: list(data.groups)})
    for j in range(data.dimension):
        frame[f"y{j}"] = data.outputs[:, j]
    if data.labels is not None:
        frame[LABEL_COLUMN] = data.labels
    return frame


class ModelSection(BaseModel):
    """One fitted post-processor; label is set for equalized notions."""

    label: Optional[int] = Field(None, description="Class label the section was fitted on")
    dimension: int = Field(..., description="Output dimension k")
    group_ids: List[str] = Field(..., description="Groups in lexicographic order")
    group_weights: List[float] = Field(..., description="p_s per group")
    mode: Mode = Field(Mode.BARYCENTRIC, description="Target materialisation mode")
    seed: int = Field(0, description="Seed of the stochastic mode")
    bandwidth: float = Field(..., description="Default kernel bandwidth")
    supports: Dict[str, List[List[float]]] = Field(..., description="Training outputs per group, row-major")
    targets: Dict[str, List[List[float]]] = Field(..., description="Transport targets per group, row-major")

    @field_validator('dimension')
    @classmethod
    def validate_dimension(cls, v: int) -> int:
        """Validate output dimension."""
        if v < 1:
            raise ValueError('Dimension must be at least 1')
        return v

    @model_validator(mode="after")
    def validate_shapes(self) -> "ModelSection":
        """Every fitted group needs matching, non-empty supports and targets of width k."""
        if len(self.group_weights) != len(self.group_ids):
            raise ValueError(f'{len(self.group_weights)} group weights for {len(self.group_ids)} groups')
        for name, table in (("supports", self.supports), ("targets", self.targets)):
            if set(table) != set(self.group_ids):
                raise ValueError(f'{name} keys {sorted(table)} do not match group_ids {self.group_ids}')
        for group in self.group_ids:
            supports, targets = self.supports[group], self.targets[group]
            if not supports:
                raise ValueError(f"Group '{group}' has no supports")
            if len(supports) != len(targets):
                raise ValueError(f"Group '{group}' has {len(supports)} supports but {len(targets)} targets")
            if any(len(row) != self.dimension for row in supports + targets):
                raise ValueError(f"Group '{group}' has rows whose width is not {self.dimension}")
        return self


class ModelDocument(BaseModel):
    """Versioned, self-describing persisted post-processor."""

    format_version: int = Field(FORMAT_VERSION, description="Document format version")
    notion: str = Field("plain", description="plain, odds or opportunity:<y>")
    sections: List[ModelSection] = Field(..., description="Fitted post-processors")

    @field_validator('format_version')
    @classmethod
    def validate_version(cls, v: int) -> int:
        """Only the current format is readable."""
        if v != FORMAT_VERSION:
            raise ValueError(f'Unsupported model format version {v}, expected {FORMAT_VERSION}')
        return v

    @field_validator('sections')
    @classmethod
    def validate_sections(cls, v: List[ModelSection]) -> List[ModelSection]:
        """At least one section is required."""
        if not v:
            raise ValueError('A model document needs at least one section')
        return v


def _section_from_fitted(fitted: FittedPostprocessor, label: Optional[int]) -> ModelSection:
    return ModelSection(
        label=label,
        dimension=fitted.dimension,
        group_ids=list(fitted.group_ids),
        group_weights=[float(p) for p in fitted.group_weights],
        mode=fitted.mode,
        seed=fitted.seed,
        bandwidth=fitted.bandwidth,
        supports={g: fitted.supports[g].tolist() for g in fitted.group_ids},
        targets={g: fitted.targets[g].tolist() for g in fitted.group_ids},
    )


def _fitted_from_section(section: ModelSection) -> FittedPostprocessor:
    def as_matrix(rows: List[List[float]]) -> np.ndarray:
        matrix = np.array(rows, dtype=np.float64).reshape(len(rows), section.dimension)
        matrix.setflags(write=False)
        return matrix

    return FittedPostprocessor(
        dimension=section.dimension,
        group_ids=tuple(section.group_ids),
        group_weights=np.array(section.group_weights, dtype=np.float64),
        supports={g: as_matrix(section.supports[g]) for g in section.group_ids},
        targets={g: as_matrix(section.targets[g]) for g in section.group_ids},
        mode=section.mode,
        seed=section.seed,
        bandwidth=section.bandwidth,
    )


def document_from_postprocessor(postprocessor: Postprocessor) -> ModelDocument:
    if isinstance(postprocessor, EqualizedPostprocessor):
        sections = [
            _section_from_fitted(postprocessor.postprocessors[label], label)
            for label in sorted(postprocessor.postprocessors)
        ]
        return ModelDocument(notion=str(postprocessor.notion), sections=sections)
    return ModelDocument(notion="plain", sections=[_section_from_fitted(postprocessor, None)])


def postprocessor_from_document(document: ModelDocument) -> Postprocessor:
    notion = Notion.parse(document.notion)
    if notion.kind == NotionKind.PLAIN:
        if len(document.sections) != 1:
            raise SchemaError("A plain model document holds exactly one section")
        return _fitted_from_section(document.sections[0])
    postprocessors = {}
    for section in document.sections:
        if section.label is None:
            raise SchemaError(f"Sections of a '{document.notion}' model must carry a label")
        postprocessors[section.label] = _fitted_from_section(section)
    return EqualizedPostprocessor(notion, postprocessors)


def save_model(postprocessor: Postprocessor, path: Union[str, Path]) -> ModelDocument:
    """Serialise a post-processor to a YAML model document."""
    document = document_from_postprocessor(postprocessor)
    text = yaml.safe_dump(document.model_dump(mode="json"), sort_keys=False, default_flow_style=None, width=4096)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
    except OSError as e:
        raise SchemaError(f"Cannot write model document {path}: {e}") from e
    logger.info(f"Wrote model document ({len(document.sections)} section(s)) to {path}")
    return document


def load_model(path: Union[str, Path]) -> Postprocessor:
    """Read a YAML model document back into a post-processor."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"Model document not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
        document = ModelDocument(**(data or {}))
    except (yaml.YAMLError, ValidationError, TypeError) as e:
        raise SchemaError(f"Invalid model document {path}: {e}") from e
    return postprocessor_from_document(document)


def write_reports(reports: Sequence[FairnessReport], path: Union[str, Path]) -> None:
    """Write fairness reports as a YAML document."""
    payload = {"reports": [r.model_dump(mode="json") for r in reports]}
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(payload, f, sort_keys=False)
    except OSError as e:
        raise SchemaError(f"Cannot write report {path}: {e}") from e


def read_reports(path: Union[str, Path]) -> List[FairnessReport]:
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    return [FairnessReport(**r) for r in data.get("reports", [])]
