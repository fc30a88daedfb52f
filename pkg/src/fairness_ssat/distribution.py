"""Tabular data ingestion, Boolean abstraction and probability estimation.

This module loads a CSV file described by a schema JSON document, turns every
attribute into Boolean feature variables (threshold, interval or category
predicates), estimates the per-variable probabilities used by randomized
quantifiers, and enumerates compound protected groups.
"""

import io
import itertools
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator

from fairness_ssat.errors import (
    ContractViolation,
    EmptyGroupError,
    InputValidationError,
    ParseError,
    StructuralError,
)
from fairness_ssat.ssat_core import Clause, Number

logger = logging.getLogger(__name__)

DEFAULT_BINS = 4

_TRUE_LABELS = {"1", "true", "yes"}
_FALSE_LABELS = {"0", "false", "no"}


###################
# Schema
###################

class AttributeKind(str, Enum):
    """Kinds of raw attributes."""

    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class AttributeSpec(BaseModel):
    """One attribute entry of the schema document."""

    name: str = Field(min_length=1, description="Column name in the CSV header")
    kind: AttributeKind = Field(description="numeric or categorical")
    protected: bool = Field(default=False, description="Whether the attribute defines protected groups")
    bins: Optional[int] = Field(default=None, ge=1, description="Equal-width bin count for numeric attributes")
    edges: Optional[List[float]] = Field(
        default=None, description="Explicit bin boundaries for numeric attributes, lowest to highest"
    )
    categories: Optional[List[str]] = Field(
        default=None, description="Category values; inferred from the data when omitted"
    )
    binary: bool = Field(
        default=False,
        description="Encode a two-category attribute with one variable for its first category",
    )

    @model_validator(mode="after")
    def _check_kind(self) -> "AttributeSpec":
        if self.kind is AttributeKind.NUMERIC:
            if self.protected:
                raise ValueError(
                    f"Protected attribute '{self.name}' must be categorical; pre-bin it into categories"
                )
            if self.categories is not None or self.binary:
                raise ValueError(f"Numeric attribute '{self.name}' cannot declare categories")
            if self.edges is not None:
                if len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
                    raise ValueError(f"Bin edges of '{self.name}' must be strictly increasing (at least 2)")
        else:
            if self.bins is not None or self.edges is not None:
                raise ValueError(f"Categorical attribute '{self.name}' cannot declare bins")
            if self.categories is not None and len(set(self.categories)) != len(self.categories):
                raise ValueError(f"Duplicate categories for '{self.name}'")
            if self.binary and self.categories is not None and len(self.categories) != 2:
                raise ValueError(f"Binary attribute '{self.name}' needs exactly two categories")
        return self


class DatasetSchema(BaseModel):
    """Schema document: ``{"label": name, "attributes": [...]}``."""

    label: str = Field(min_length=1, description="Name of the ground-truth label column")
    positive_label: Optional[str] = Field(
        default=None, description="Label value counted as class 1; otherwise labels must be 0/1"
    )
    attributes: List[AttributeSpec] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_names(self) -> "DatasetSchema":
        names = [attribute.name for attribute in self.attributes]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"Duplicate attribute names: {duplicates}")
        if self.label in names:
            raise ValueError(f"Label column '{self.label}' is also listed as an attribute")
        return self

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DatasetSchema":
        """Read and validate a schema JSON file."""
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def attribute(self, name: str) -> AttributeSpec:
        for attribute in self.attributes:
            if attribute.name == name:
                return attribute
        raise InputValidationError(f"Unknown attribute '{name}'")

    def protected_names(self) -> List[str]:
        return [attribute.name for attribute in self.attributes if attribute.protected]

    def with_protected(self, names: Sequence[str]) -> "DatasetSchema":
        """Return a copy in which exactly ``names`` are protected."""
        wanted = set(names)
        for name in wanted:
            if self.attribute(name).kind is not AttributeKind.CATEGORICAL:
                raise InputValidationError(f"Protected attribute '{name}' must be categorical")
        attributes = [
            attribute.model_copy(update={"protected": attribute.name in wanted})
            for attribute in self.attributes
        ]
        return self.model_copy(update={"attributes": attributes})

    def require_protected(self) -> None:
        if not self.protected_names():
            raise InputValidationError("Schema declares no protected attribute")


###################
# Feature map
###################

class PredicateKind(str, Enum):
    """Predicate a Boolean feature variable stands for."""

    THRESHOLD = "threshold"
    INTERVAL = "interval"
    CATEGORY = "category"
    BOOLEAN = "boolean"


def format_number(value: float) -> str:
    """Shortest text for a bin boundary: ``40`` rather than ``40.0``."""
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class FeatureVariable:
    """One Boolean variable and the predicate over a raw attribute it encodes.

    ``alternative`` is set for two-valued attributes encoded by a single
    variable: the variable is true for ``category`` and false for
    ``alternative``.
    """

    var: int
    attribute: str
    kind: PredicateKind
    protected: bool = False
    threshold: Optional[float] = None
    low: Optional[float] = None
    high: Optional[float] = None
    closed: bool = False
    category: Optional[str] = None
    alternative: Optional[str] = None

    @property
    def name(self) -> str:
        if self.kind is PredicateKind.THRESHOLD:
            return f"{self.attribute}>={format_number(self.threshold)}"
        if self.kind is PredicateKind.INTERVAL:
            right = "]" if self.closed else ")"
            return f"{self.attribute} in [{format_number(self.low)}, {format_number(self.high)}{right}"
        if self.kind is PredicateKind.BOOLEAN:
            return self.attribute
        return f"{self.attribute}={self.category}"

    @property
    def midpoint(self) -> float:
        if self.kind is not PredicateKind.INTERVAL:
            raise StructuralError(f"Variable '{self.name}' is not an interval")
        return (self.low + self.high) / 2

    def holds(self, value: Any) -> bool:
        """Evaluate the predicate on a raw attribute value."""
        if self.kind is PredicateKind.THRESHOLD:
            return float(value) >= self.threshold
        if self.kind is PredicateKind.INTERVAL:
            value = float(value)
            upper = value <= self.high if self.closed else value < self.high
            return self.low <= value and upper
        return str(value) == self.category

    def column(self, values: np.ndarray) -> np.ndarray:
        """Evaluate the predicate over a whole column of raw values."""
        if self.kind is PredicateKind.THRESHOLD:
            return values >= self.threshold
        if self.kind is PredicateKind.INTERVAL:
            upper = values <= self.high if self.closed else values < self.high
            return (values >= self.low) & upper
        return values == self.category


@dataclass(frozen=True)
class FeatureMap:
    """Bijection between variable ids ``1..n`` and attribute predicates."""

    variables: Tuple[FeatureVariable, ...]
    _by_name: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_name: Dict[str, int] = {}
        for position, variable in enumerate(self.variables, start=1):
            if variable.var != position:
                raise StructuralError(f"Feature variable ids must be dense; found {variable.var} at {position}")
            if variable.name in by_name:
                raise StructuralError(f"Duplicate feature variable '{variable.name}'")
            by_name[variable.name] = variable.var
        object.__setattr__(self, "_by_name", by_name)

    @classmethod
    def from_booleans(cls, names: Sequence[str], protected: Iterable[str] = ()) -> "FeatureMap":
        """Build a map of plain Boolean features, one attribute per name."""
        protected = set(protected)
        unknown = sorted(protected - set(names))
        if unknown:
            raise StructuralError(f"Protected names not in the feature list: {unknown}")
        return cls(tuple(
            FeatureVariable(
                var=index,
                attribute=name,
                kind=PredicateKind.BOOLEAN,
                protected=name in protected,
                category="1",
                alternative="0",
            )
            for index, name in enumerate(names, start=1)
        ))

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    def var_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise StructuralError(f"Unknown feature variable '{name}'") from None

    def variable(self, var: int) -> FeatureVariable:
        if not 1 <= var <= self.num_vars:
            raise StructuralError(f"Variable {var} is not in the feature map")
        return self.variables[var - 1]

    def name_of(self, var: int) -> str:
        return self.variable(var).name

    def protected_vars(self) -> List[int]:
        return [v.var for v in self.variables if v.protected]

    def non_protected_vars(self) -> List[int]:
        return [v.var for v in self.variables if not v.protected]

    def attributes(self) -> Dict[str, List[FeatureVariable]]:
        """Group variables by attribute, in variable order."""
        grouped: Dict[str, List[FeatureVariable]] = {}
        for variable in self.variables:
            grouped.setdefault(variable.attribute, []).append(variable)
        return grouped

    def protected_attributes(self) -> List[str]:
        return sorted({v.attribute for v in self.variables if v.protected})

    def legend(self) -> List[str]:
        """One ``<var> <name>`` line per variable; protected ones are marked."""
        return [
            f"{v.var} {v.name}" + (" [protected]" if v.protected else "")
            for v in self.variables
        ]


###################
# Boolean data
###################

@dataclass(frozen=True)
class BooleanDataset:
    """Bit matrix over feature variables (column ``v - 1`` is variable ``v``) plus labels."""

    bits: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.bits.ndim != 2 or self.labels.ndim != 1 or len(self.bits) != len(self.labels):
            raise StructuralError("Bit matrix and label vector shapes disagree")

    @property
    def num_rows(self) -> int:
        return len(self.labels)

    def column(self, var: int) -> np.ndarray:
        return self.bits[:, var - 1]

    def subset(self, mask: np.ndarray) -> "BooleanDataset":
        return BooleanDataset(self.bits[mask], self.labels[mask])


def load_csv(path: Union[str, Path], schema: DatasetSchema) -> pd.DataFrame:
    """Read a comma-separated file with a header row and check it against the schema.

    Raises:
        ParseError: for bytes that are not UTF-8 or a row with the wrong field count
        InputValidationError: for missing columns, an empty file or missing values
    """
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as error:
        raise ParseError.from_decode(data, error, str(path)) from None
    try:
        frame = pd.read_csv(io.StringIO(text), skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise InputValidationError(f"{path}: dataset is empty") from None
    except pd.errors.ParserError as error:
        found = re.search(r"line (\d+)", str(error))
        raise ParseError(
            str(error).strip(), int(found.group(1)) if found else None, source=str(path)
        ) from None
    columns = [schema.label] + [attribute.name for attribute in schema.attributes]
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise InputValidationError(f"{path}: unknown column(s) {missing}")
    if frame.empty:
        raise InputValidationError(f"{path}: dataset has no rows")
    holes = frame[columns].isna()
    if holes.to_numpy().any():
        row, column = next(zip(*np.nonzero(holes.to_numpy())))
        raise InputValidationError(
            f"{path}: missing value in column '{columns[column]}' at data row {row + 1}"
        )
    logger.info(f"Loaded {len(frame)} rows from {path}")
    return frame


def _label_vector(frame: pd.DataFrame, schema: DatasetSchema) -> np.ndarray:
    values = frame[schema.label].astype(str).str.strip()
    if schema.positive_label is not None:
        return (values == schema.positive_label).to_numpy()
    lowered = values.str.lower()
    unknown = sorted(set(lowered) - _TRUE_LABELS - _FALSE_LABELS)
    if unknown:
        raise InputValidationError(
            f"Label column '{schema.label}' has non-binary values {unknown[:5]}; set positive_label"
        )
    return lowered.isin(_TRUE_LABELS).to_numpy()


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = pd.to_numeric(frame[name], errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        raise InputValidationError(
            f"Non-numeric value {frame[name].iloc[row]!r} in numeric column '{name}' at data row {row + 1}"
        )
    return values.to_numpy(dtype=float)


def _interval_edges(spec: AttributeSpec, values: Optional[np.ndarray], default_bins: int) -> np.ndarray:
    if spec.edges is not None:
        edges = np.asarray(spec.edges, dtype=float)
        if values is not None:
            outside = (values < edges[0]) | (values > edges[-1])
            if outside.any():
                raise InputValidationError(
                    f"Value {values[outside][0]} of '{spec.name}' lies outside its bin edges"
                )
        return edges
    if values is None:
        raise InputValidationError(
            f"Numeric attribute '{spec.name}' needs explicit edges or data to derive its bins"
        )
    bins = spec.bins or default_bins
    low, high = float(values.min()), float(values.max())
    if low == high:
        high = low + 1.0
    return np.linspace(low, high, bins + 1)


def _predicates(
    spec: AttributeSpec,
    values: Optional[np.ndarray],
    thresholds: Optional[Sequence[float]],
    default_bins: int,
) -> List[Dict[str, Any]]:
    """Describe the Boolean variables one attribute turns into, in variable order."""
    if spec.kind is AttributeKind.NUMERIC:
        if thresholds is not None:
            if spec.edges is not None or spec.bins is not None:
                logger.info(f"Using model thresholds for '{spec.name}' instead of its bins")
            return [
                {"attribute": spec.name, "kind": PredicateKind.THRESHOLD, "threshold": t}
                for t in sorted({float(t) for t in thresholds})
            ]
        edges = _interval_edges(spec, values, default_bins)
        count = len(edges) - 1
        return [
            {
                "attribute": spec.name,
                "kind": PredicateKind.INTERVAL,
                "low": float(edges[position]),
                "high": float(edges[position + 1]),
                "closed": position == count - 1,
            }
            for position in range(count)
        ]

    if spec.categories is not None:
        categories = list(spec.categories)
    elif values is not None:
        categories = sorted(set(values))
    else:
        raise InputValidationError(f"Categorical attribute '{spec.name}' needs declared categories")
    if values is not None:
        strays = sorted(set(values) - set(categories))
        if strays:
            raise InputValidationError(f"Column '{spec.name}' has undeclared categories {strays[:5]}")
    common = {"attribute": spec.name, "kind": PredicateKind.CATEGORY, "protected": spec.protected}
    if spec.binary:
        if len(categories) != 2:
            raise InputValidationError(f"Binary attribute '{spec.name}' has {len(categories)} categories")
        return [{**common, "category": categories[0], "alternative": categories[1]}]
    return [{**common, "category": category} for category in categories]


def _column_values(frame: pd.DataFrame, spec: AttributeSpec) -> np.ndarray:
    if spec.kind is AttributeKind.NUMERIC:
        return _numeric_column(frame, spec.name)
    return frame[spec.name].astype(str).str.strip().to_numpy()


def _check_thresholds(schema: DatasetSchema, thresholds: Mapping[str, Sequence[float]]) -> None:
    for name in thresholds:
        if schema.attribute(name).kind is not AttributeKind.NUMERIC:
            raise InputValidationError(f"Model thresholds refer to non-numeric attribute '{name}'")


def feature_map_from_schema(
    schema: DatasetSchema,
    thresholds: Optional[Mapping[str, Sequence[float]]] = None,
    default_bins: int = DEFAULT_BINS,
) -> FeatureMap:
    """Build the feature map without data; needs declared categories and edges (or model thresholds)."""
    thresholds = thresholds or {}
    _check_thresholds(schema, thresholds)
    fields: List[Dict[str, Any]] = []
    for spec in schema.attributes:
        fields.extend(_predicates(spec, None, thresholds.get(spec.name), default_bins))
    return FeatureMap(tuple(FeatureVariable(var=index, **entry) for index, entry in enumerate(fields, start=1)))


def discretize(
    frame: pd.DataFrame,
    schema: DatasetSchema,
    thresholds: Optional[Mapping[str, Sequence[float]]] = None,
    default_bins: int = DEFAULT_BINS,
) -> Tuple[BooleanDataset, FeatureMap]:
    """Booleanize a validated frame.

    Numeric attributes named in ``thresholds`` become ``attr>=t`` variables
    (ascending ``t``); other numeric attributes become equal-width interval
    one-hots, or intervals over the schema's explicit edges. Categorical
    attributes become one-hots, or a single variable when marked binary.

    Returns:
        The bit matrix with labels and the feature map, in schema order
    """
    thresholds = thresholds or {}
    _check_thresholds(schema, thresholds)
    variables: List[FeatureVariable] = []
    columns: List[np.ndarray] = []
    for spec in schema.attributes:
        values = _column_values(frame, spec)
        for entry in _predicates(spec, values, thresholds.get(spec.name), default_bins):
            variable = FeatureVariable(var=len(variables) + 1, **entry)
            variables.append(variable)
            columns.append(variable.column(values))

    fmap = FeatureMap(tuple(variables))
    bits = np.column_stack(columns) if columns else np.zeros((len(frame), 0), dtype=bool)
    dataset = BooleanDataset(bits.astype(bool), _label_vector(frame, schema))
    logger.info(f"Discretized {len(schema.attributes)} attributes into {fmap.num_vars} Boolean variables")
    return dataset, fmap


###################
# Groups and contexts
###################

@dataclass(frozen=True)
class CompoundGroup:
    """One category per protected attribute, with the induced protected-variable values."""

    values: Tuple[Tuple[str, str], ...]
    assignment: Tuple[Tuple[int, bool], ...]

    @property
    def label(self) -> str:
        return ", ".join(f"{attribute}={category}" for attribute, category in self.values)

    def as_dict(self) -> Dict[str, str]:
        return dict(self.values)

    def as_assignment(self) -> Dict[int, bool]:
        return dict(self.assignment)

    def mask(self, data: BooleanDataset) -> np.ndarray:
        """Rows that belong to the group."""
        selected = np.ones(data.num_rows, dtype=bool)
        for var, value in self.assignment:
            selected &= data.column(var) == value
        return selected


def _categories(variables: List[FeatureVariable]) -> List[Tuple[str, Dict[int, bool]]]:
    """List (category, protected-variable values) pairs for one attribute."""
    if len(variables) == 1 and variables[0].alternative is not None:
        v = variables[0]
        return [(v.category, {v.var: True}), (v.alternative, {v.var: False})]
    return [
        (v.category, {other.var: other.var == v.var for other in variables})
        for v in variables
    ]


def enumerate_groups(fmap: FeatureMap) -> List[CompoundGroup]:
    """Cartesian product of protected categories, ordered by attribute then category name."""
    attributes = fmap.attributes()
    names = fmap.protected_attributes()
    if not names:
        raise InputValidationError("No protected attribute in the feature map")
    options = [sorted(_categories(attributes[name]), key=lambda item: item[0]) for name in names]
    groups = []
    for combination in itertools.product(*options):
        values = tuple((name, category) for name, (category, _) in zip(names, combination))
        assignment: Dict[int, bool] = {}
        for _, partial in combination:
            assignment.update(partial)
        groups.append(CompoundGroup(values, tuple(sorted(assignment.items()))))
    return groups


def group_to_unit_clauses(group: CompoundGroup) -> List[Clause]:
    """One unit clause per protected variable: positive when selected, negative otherwise."""
    return [(var,) if value else (-var,) for var, value in group.assignment]


def group_from_assignment(fmap: FeatureMap, assignment: Mapping[int, bool]) -> CompoundGroup:
    """Read the compound group selected by a protected-variable assignment.

    Raises:
        ContractViolation: when the assignment picks zero or several categories
            of a one-hot attribute
    """
    attributes = fmap.attributes()
    values = []
    chosen: Dict[int, bool] = {}
    for name in fmap.protected_attributes():
        variables = attributes[name]
        current = {v.var: bool(assignment.get(v.var, False)) for v in variables}
        matches = [category for category, partial in _categories(variables) if partial == current]
        if len(matches) != 1:
            raise ContractViolation(f"Assignment {current} is not a valid category of '{name}'")
        values.append((name, matches[0]))
        chosen.update(current)
    return CompoundGroup(tuple(values), tuple(sorted(chosen.items())))


def exactly_one_clauses(fmap: FeatureMap) -> List[Clause]:
    """Exactly-one constraints over every protected one-hot attribute."""
    clauses: List[Clause] = []
    for name in fmap.protected_attributes():
        variables = fmap.attributes()[name]
        if len(variables) == 1 and variables[0].alternative is not None:
            continue
        ids = [v.var for v in variables]
        clauses.append(tuple(ids))
        clauses.extend((-a, -b) for a, b in itertools.combinations(ids, 2))
    return clauses


def threshold_chains(fmap: FeatureMap) -> List[List[int]]:
    """Threshold variables per numeric attribute, strongest (highest threshold) first."""
    chains = []
    for variables in fmap.attributes().values():
        nested = [v for v in variables if v.kind is PredicateKind.THRESHOLD]
        if len(nested) > 1:
            chains.append([v.var for v in sorted(nested, key=lambda v: v.threshold, reverse=True)])
    return chains


@dataclass(frozen=True)
class ConditioningContext:
    """Rows used for a probability estimate: a group, a label class, both, or everything."""

    group: Optional[CompoundGroup] = None
    label: Optional[int] = None

    def describe(self) -> str:
        parts = []
        if self.group is not None:
            parts.append(self.group.label)
        if self.label is not None:
            parts.append(f"y={self.label}")
        return ", ".join(parts) if parts else "none"

    def mask(self, data: BooleanDataset) -> np.ndarray:
        selected = np.ones(data.num_rows, dtype=bool)
        if self.group is not None:
            selected &= self.group.mask(data)
        if self.label is not None:
            selected &= data.labels == bool(self.label)
        return selected


@dataclass(frozen=True)
class ProbabilityTable:
    """``Pr[X_v = 1]`` per non-protected variable within a conditioning context."""

    context: ConditioningContext
    probs: Mapping[int, Number]
    rows: int

    def randomized_block(self) -> List[Tuple[int, Number]]:
        return sorted(self.probs.items())

    def named(self, fmap: FeatureMap) -> Dict[str, float]:
        return {fmap.name_of(var): float(p) for var, p in sorted(self.probs.items())}


def estimate_probs(
    data: BooleanDataset,
    fmap: FeatureMap,
    context: ConditioningContext = ConditioningContext(),
    exact: bool = False,
) -> ProbabilityTable:
    """Relative frequency of each non-protected variable among the context's rows.

    Raises:
        EmptyGroupError: when no row falls into the context
    """
    selected = context.mask(data)
    rows = int(selected.sum())
    if rows == 0:
        raise EmptyGroupError(context.describe())
    variables = fmap.non_protected_vars()
    counts = data.bits[selected][:, [var - 1 for var in variables]].sum(axis=0)
    if exact:
        probs: Dict[int, Number] = {var: Fraction(int(c), rows) for var, c in zip(variables, counts)}
    else:
        probs = {var: float(c) / rows for var, c in zip(variables, counts)}
    return ProbabilityTable(context, probs, rows)


def dump_probability_tables(
    path: Union[str, Path], tables: Sequence[ProbabilityTable], fmap: FeatureMap
) -> None:
    """Write every probability table used by a run as JSON."""
    records = [
        {"context": table.context.describe(), "rows": table.rows, "probabilities": table.named(fmap)}
        for table in tables
    ]
    Path(path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {len(records)} probability tables to {path}")
