"""
Observed-data structures shared by every estimator.

A subject contributes (V, delta, Z, Y) plus optional auxiliary covariates that
extend Z to the selection-model vector H. delta = 1 means the censored
covariate X was observed (V = X); delta = 0 means only the lower bound V = C
is known. The reversed indicator used by the censoring-time models is always
derived as 1 - delta and never stored.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DataParseError, EmptyDatasetError, EstimationError, SchemaError

logger = logging.getLogger(__name__)

SCHEMA_ROLES = ("v", "delta", "y", "z", "h_extra", "interactions")
REQUIRED_ROLES = ("v", "delta", "y")


def _as_names(value: Any) -> Tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(name.strip() for name in value.split(",") if name.strip())
    return tuple(str(name) for name in value)


@dataclass(frozen=True)
class ColumnSchema:
    v: str = "v"
    delta: str = "delta"
    y: str = "y"
    z: Tuple[str, ...] = ()
    h_extra: Tuple[str, ...] = ()
    interactions: Tuple[str, ...] = ()

    def __post_init__(self):
        errors: Dict[str, List[str]] = {}
        seen: Dict[str, str] = {}
        roles = [("v", self.v), ("delta", self.delta), ("y", self.y)]
        roles += [("z", name) for name in self.z]
        roles += [("h_extra", name) for name in self.h_extra]
        for role, name in roles:
            if not name:
                errors.setdefault(role, []).append("column name must not be empty")
            elif name in seen:
                errors.setdefault(role, []).append(
                    f"column '{name}' is already used as {seen[name]}"
                )
            else:
                seen[name] = role
        for name in self.interactions:
            if name not in self.z:
                errors.setdefault("interactions", []).append(f"'{name}' is not a z column")
        if errors:
            raise SchemaError("invalid column schema", errors)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ColumnSchema":
        errors = {key: ["unknown role"] for key in mapping if key not in SCHEMA_ROLES}
        errors.update({key: ["this role is required"] for key in REQUIRED_ROLES if not mapping.get(key)})
        if errors:
            raise SchemaError("invalid column schema", errors)
        return cls(
            v=str(mapping["v"]),
            delta=str(mapping["delta"]),
            y=str(mapping["y"]),
            z=_as_names(mapping.get("z")),
            h_extra=_as_names(mapping.get("h_extra")),
            interactions=_as_names(mapping.get("interactions")),
        )

    @classmethod
    def from_json(cls, path) -> "ColumnSchema":
        try:
            with open(path, "r", encoding="utf-8") as f:
                mapping = json.load(f)
        except FileNotFoundError:
            raise SchemaError(f"schema file not found: {path}")
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file {path} is not valid JSON: {exc}")
        if not isinstance(mapping, dict):
            raise SchemaError(f"schema file {path} must hold a JSON object")
        return cls.from_mapping(mapping)

    @classmethod
    def default(cls, p: int, q: int, interactions: Sequence[int] = ()) -> "ColumnSchema":
        z = tuple(f"z{j + 1}" for j in range(p))
        return cls(
            z=z,
            h_extra=tuple(f"h{j + 1}" for j in range(q)),
            interactions=tuple(z[j] for j in interactions),
        )

    @property
    def columns(self) -> Tuple[str, ...]:
        return (self.v, self.delta, *self.z, *self.h_extra, self.y)

    @property
    def interaction_indices(self) -> Tuple[int, ...]:
        return tuple(self.z.index(name) for name in self.interactions)

    def to_mapping(self) -> Dict[str, Any]:
        return {
            "v": self.v,
            "delta": self.delta,
            "y": self.y,
            "z": list(self.z),
            "h_extra": list(self.h_extra),
            "interactions": list(self.interactions),
        }


@dataclass(frozen=True)
class ObservedRecord:
    v: float
    delta: int
    z: Tuple[float, ...]
    y: float
    h_extra: Tuple[float, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.v) or self.v < 0:
            raise DataParseError(f"observed value v must be finite and non-negative, got {self.v}")
        if self.delta not in (0, 1):
            raise DataParseError(f"delta must be 0 or 1, got {self.delta}")
        if not math.isfinite(self.y):
            raise DataParseError(f"outcome y must be finite, got {self.y}")
        if not all(math.isfinite(value) for value in (*self.z, *self.h_extra)):
            raise DataParseError("covariates must be finite")

    @property
    def delta_star(self) -> int:
        return 1 - self.delta

    @property
    def h(self) -> Tuple[float, ...]:
        return self.z + self.h_extra


@dataclass(frozen=True)
class Dataset:
    records: Tuple[ObservedRecord, ...]
    schema: Optional[ColumnSchema] = None
    interactions: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "interactions", tuple(self.interactions))
        if not self.records:
            raise EmptyDatasetError("dataset has no records")
        p, q = len(self.records[0].z), len(self.records[0].h_extra)
        for index, record in enumerate(self.records, start=1):
            if len(record.z) != p or len(record.h_extra) != q:
                raise DataParseError(
                    f"record has {len(record.z)} z and {len(record.h_extra)} auxiliary values, "
                    f"expected {p} and {q}",
                    row=index,
                )
        if any(j < 0 or j >= p for j in self.interactions):
            raise SchemaError("interaction index outside the z columns")

    @classmethod
    def from_arrays(
        cls,
        v,
        delta,
        y,
        z=None,
        h_extra=None,
        schema: Optional[ColumnSchema] = None,
        interactions: Sequence[int] = (),
    ) -> "Dataset":
        v = np.asarray(v, dtype=float)
        n = v.shape[0]
        z = np.zeros((n, 0)) if z is None else np.asarray(z, dtype=float).reshape(n, -1)
        h_extra = np.zeros((n, 0)) if h_extra is None else np.asarray(h_extra, dtype=float).reshape(n, -1)
        delta = np.asarray(delta)
        y = np.asarray(y, dtype=float)
        records = tuple(
            ObservedRecord(
                v=float(v[i]),
                delta=int(delta[i]),
                z=tuple(float(value) for value in z[i]),
                y=float(y[i]),
                h_extra=tuple(float(value) for value in h_extra[i]),
            )
            for i in range(n)
        )
        return cls(records, schema=schema, interactions=tuple(interactions))

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def p(self) -> int:
        return len(self.records[0].z)

    @property
    def q(self) -> int:
        return len(self.records[0].h_extra)

    @property
    def n_parameters(self) -> int:
        return self.p + 2 + len(self.interactions)

    @cached_property
    def v(self) -> np.ndarray:
        return np.array([r.v for r in self.records], dtype=float)

    @cached_property
    def delta(self) -> np.ndarray:
        return np.array([r.delta for r in self.records], dtype=int)

    @property
    def delta_star(self) -> np.ndarray:
        return 1 - self.delta

    @cached_property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records], dtype=float)

    @cached_property
    def z(self) -> np.ndarray:
        return np.array([r.z for r in self.records], dtype=float).reshape(self.n, self.p)

    @cached_property
    def h_extra(self) -> np.ndarray:
        return np.array([r.h_extra for r in self.records], dtype=float).reshape(self.n, self.q)

    @property
    def h(self) -> np.ndarray:
        return np.hstack([self.z, self.h_extra])

    @property
    def n_censored(self) -> int:
        return int(self.n - self.delta.sum())

    @property
    def censoring_fraction(self) -> float:
        return self.n_censored / self.n

    @property
    def complete_cases(self) -> np.ndarray:
        return self.delta == 1

    def design(self, x: Optional[np.ndarray] = None) -> np.ndarray:
        """Outcome design (1, x, z, x * z_j for each interaction), one row per record."""
        x = self.v if x is None else np.asarray(x, dtype=float)
        columns = [np.ones(self.n), x, *self.z.T]
        columns += [x * self.z[:, j] for j in self.interactions]
        return np.column_stack(columns)

    @property
    def design_names(self) -> List[str]:
        schema = self.schema or ColumnSchema.default(self.p, self.q)
        names = ["(Intercept)", schema.v, *schema.z]
        names += [f"{schema.v}:{schema.z[j]}" for j in self.interactions]
        return names

    def selection_covariates(self, include_outcome: bool = True) -> np.ndarray:
        if include_outcome:
            return np.column_stack([self.y, self.h])
        return self.h

    def selection_names(self, include_outcome: bool = True) -> List[str]:
        schema = self.schema or ColumnSchema.default(self.p, self.q)
        names = [*schema.z, *schema.h_extra]
        return [schema.y, *names] if include_outcome else names

    def with_latent_x(self, x) -> "Dataset":
        """The same subjects with X fully observed, used by the no-censoring reference fit."""
        return Dataset.from_arrays(
            v=x,
            delta=np.ones(self.n, dtype=int),
            y=self.y,
            z=self.z,
            h_extra=self.h_extra,
            schema=self.schema,
            interactions=self.interactions,
        )


@dataclass(frozen=True)
class ValidationReport:
    n: int
    n_censored: int
    censoring_fraction: float
    n_complete: int
    design_rank: int
    n_parameters: int
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.flags


def validate_dataset(d: Dataset) -> ValidationReport:
    flags = []
    complete = d.complete_cases
    n_complete = int(complete.sum())
    rank = 0
    if n_complete == 0:
        flags.append("no complete cases; all fits impossible")
    else:
        rank = int(np.linalg.matrix_rank(d.design()[complete]))
        if n_complete < d.n_parameters:
            flags.append(
                f"only {n_complete} complete cases for {d.n_parameters} parameters"
            )
        if rank < d.n_parameters:
            flags.append(
                f"rank-deficient complete-case design (rank {rank} of {d.n_parameters} columns)"
            )
    return ValidationReport(
        n=d.n,
        n_censored=d.n_censored,
        censoring_fraction=d.censoring_fraction,
        n_complete=n_complete,
        design_rank=rank,
        n_parameters=d.n_parameters,
        flags=tuple(flags),
    )


def _parse_number(row: Mapping[str, str], column: str, row_number: int) -> float:
    raw = row.get(column)
    if raw is None or raw.strip() == "":
        raise DataParseError(f"empty cell in column '{column}'", row=row_number)
    try:
        value = float(raw)
    except ValueError:
        raise DataParseError(f"non-numeric value {raw!r} in column '{column}'", row=row_number)
    if not math.isfinite(value):
        raise DataParseError(f"non-finite value {raw!r} in column '{column}'", row=row_number)
    return value


def _parse_row(row: Mapping[str, str], schema: ColumnSchema, row_number: int) -> ObservedRecord:
    delta = _parse_number(row, schema.delta, row_number)
    if delta not in (0.0, 1.0):
        raise DataParseError(
            f"delta must be 0 or 1, got {row[schema.delta]!r} in column '{schema.delta}'",
            row=row_number,
        )
    try:
        return ObservedRecord(
            v=_parse_number(row, schema.v, row_number),
            delta=int(delta),
            z=tuple(_parse_number(row, name, row_number) for name in schema.z),
            y=_parse_number(row, schema.y, row_number),
            h_extra=tuple(_parse_number(row, name, row_number) for name in schema.h_extra),
        )
    except DataParseError as exc:
        if exc.row is not None:
            raise
        raise DataParseError(str(exc), row=row_number) from exc


def load_csv(path, schema: ColumnSchema) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataParseError(f"input file not found: {path}")

    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames
        if not header:
            raise EmptyDatasetError(f"{path} is empty")

        missing = [name for name in schema.columns if name not in header]
        if missing:
            raise SchemaError(
                f"{path} is missing columns",
                {name: ["column not found in header"] for name in missing},
            )

        records = [
            _parse_row(row, schema, row_number)
            for row_number, row in enumerate(reader, start=1)
        ]

    if not records:
        raise EmptyDatasetError(f"{path} has a header but no data rows")

    logger.debug("Loaded %d records from %s", len(records), path)
    return Dataset(tuple(records), schema=schema, interactions=schema.interaction_indices)


def write_csv(d: Dataset, path) -> Path:
    path = Path(path)
    schema = d.schema or ColumnSchema.default(d.p, d.q, d.interactions)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(schema.columns)
        for r in d.records:
            writer.writerow(
                [repr(r.v), str(r.delta), *map(repr, r.z), *map(repr, r.h_extra), repr(r.y)]
            )
    return path


class WeightScheme(str, Enum):
    CC = "cc"
    IPCW_LOGISTIC = "ipcw"
    IPCW_KM = "ipcw-km"
    IPCW_COX = "ipcw-cox"


@dataclass(frozen=True, eq=False)
class WeightVector:
    pi: np.ndarray
    w: np.ndarray
    scheme: WeightScheme
    stabilized: bool = False
    floored: Optional[np.ndarray] = None
    stabilizer: Optional[np.ndarray] = None
    n_truncated: int = 0
    selection_model: Any = None

    def __post_init__(self):
        if self.pi.shape != self.w.shape:
            raise ValueError("pi and w must have the same length")
        if not (np.all(np.isfinite(self.pi)) and np.all(np.isfinite(self.w))):
            raise EstimationError("selection probabilities or weights are not finite")
        if np.any(self.w < 0):
            raise ValueError("weights must be non-negative")
        if self.floored is None:
            object.__setattr__(self, "floored", np.zeros(self.w.shape, dtype=bool))

    @classmethod
    def unit(cls, delta: Iterable[int], scheme: WeightScheme) -> "WeightVector":
        delta = np.asarray(delta, dtype=float)
        return cls(pi=np.ones_like(delta), w=delta.copy(), scheme=scheme)

    @property
    def n(self) -> int:
        return int(self.w.shape[0])

    @property
    def n_floored(self) -> int:
        return int(np.count_nonzero(self.floored))
