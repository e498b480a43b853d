"""Mixed-type tabular data: schema, dataset container and CSV I/O.

Numerical columns are stored as float64 arrays with a separate missing mask,
categorical columns as integer codes into a tuple of category tokens (code -1
is missing). Cell-level access goes through :data:`MISSING`, so callers never
see a sentinel number or string.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Union

import numpy as np

if TYPE_CHECKING:
    from .detector import DetectionResult

DEFAULT_MISSING_TOKENS = frozenset({"", "NA"})
LABELS = ("normal", "I", "II", "III", "IV")


class _MissingType:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "MISSING"

    def __reduce__(self):
        return (_MissingType, ())

    def __bool__(self):
        return False


MISSING = _MissingType()
Cell = Union[float, str, _MissingType]


class SchemaError(ValueError):
    pass


class CSVFormatError(ValueError):
    """Malformed CSV content; ``line`` is the 1-based file line number."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class Kind(str, Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: Kind


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise SchemaError("schema has no attributes")
        seen = set()
        for a in attrs:
            if not isinstance(a.name, str) or not a.name:
                raise SchemaError("attribute names must be non-empty text")
            if a.name in seen:
                raise SchemaError(f"duplicate attribute name {a.name!r}")
            seen.add(a.name)

    @classmethod
    def of(cls, **kinds: str) -> Schema:
        """``Schema.of(x="numerical", color="categorical")``, in argument order."""
        return cls(tuple(Attribute(k, Kind(v)) for k, v in kinds.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def p(self) -> int:
        return len(self.attributes)

    def kind(self, name: str) -> Kind:
        for a in self.attributes:
            if a.name == name:
                return a.kind
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(
            {"attributes": [{"name": a.name, "kind": a.kind.value} for a in self.attributes]}
        )

    @classmethod
    def from_json(cls, text: str) -> Schema:
        obj = json.loads(text)
        try:
            items = obj["attributes"]
            return cls(tuple(Attribute(it["name"], Kind(it["kind"])) for it in items))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"invalid schema JSON: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> Schema:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass(frozen=True)
class NumericColumn:
    values: np.ndarray  # float64; entries under ``missing`` are 0.0
    missing: np.ndarray  # bool

    def __len__(self):
        return len(self.values)

    def cell(self, g: int) -> Cell:
        return MISSING if self.missing[g] else float(self.values[g])


@dataclass(frozen=True)
class CategoricalColumn:
    codes: np.ndarray  # int64 index into ``categories``; -1 is missing
    categories: tuple[str, ...]

    def __len__(self):
        return len(self.codes)

    @property
    def missing(self) -> np.ndarray:
        return self.codes < 0

    def cell(self, g: int) -> Cell:
        c = self.codes[g]
        return MISSING if c < 0 else self.categories[c]


Column = Union[NumericColumn, CategoricalColumn]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _numeric_column(cells: Sequence[Any]) -> NumericColumn:
    values = np.zeros(len(cells), dtype=np.float64)
    missing = np.zeros(len(cells), dtype=bool)
    for g, v in enumerate(cells):
        if v is MISSING or v is None:
            missing[g] = True
            continue
        if isinstance(v, (str, bytes)):
            raise TypeError(f"numerical cell {g} holds text {v!r}")
        x = float(v)
        if math.isnan(x):
            missing[g] = True
        elif math.isinf(x):
            raise ValueError(f"numerical cell {g} is infinite")
        else:
            values[g] = x
    return NumericColumn(_freeze(values), _freeze(missing))


def _categorical_column(cells: Sequence[Any]) -> CategoricalColumn:
    index: dict[str, int] = {}
    codes = np.empty(len(cells), dtype=np.int64)
    for g, v in enumerate(cells):
        if v is MISSING or v is None:
            codes[g] = -1
            continue
        if not isinstance(v, str):
            raise TypeError(f"categorical cell {g} is not text: {v!r}")
        codes[g] = index.setdefault(v, len(index))
    return CategoricalColumn(_freeze(codes), tuple(index))


class Dataset:
    """Immutable columnar table. Case ids are the row positions ``0..n-1``."""

    def __init__(self, schema: Schema, columns: Mapping[str, Column]):
        if set(columns) != set(schema.names):
            raise SchemaError("columns do not match schema attribute names")
        lengths = {len(columns[name]) for name in schema.names}
        if len(lengths) != 1:
            raise SchemaError(f"columns have unequal lengths {sorted(lengths)}")
        for a in schema.attributes:
            col = columns[a.name]
            expected = NumericColumn if a.kind is Kind.NUMERICAL else CategoricalColumn
            if not isinstance(col, expected):
                raise SchemaError(f"column {a.name!r} is not {a.kind.value}")
            if isinstance(col, NumericColumn) and not np.all(np.isfinite(col.values)):
                raise SchemaError(f"column {a.name!r} has non-finite values")
        self.schema = schema
        self._columns = {name: columns[name] for name in schema.names}
        self.n = lengths.pop()

    @classmethod
    def from_cells(cls, schema: Schema, cells: Mapping[str, Sequence[Any]]) -> Dataset:
        """Build from per-attribute Python sequences.

        ``None``, ``MISSING`` and (in numerical columns) NaN become missing.
        """
        cols: dict[str, Column] = {}
        for a in schema.attributes:
            if a.name not in cells:
                raise SchemaError(f"no cells for attribute {a.name!r}")
            seq = list(cells[a.name])
            cols[a.name] = (
                _numeric_column(seq) if a.kind is Kind.NUMERICAL else _categorical_column(seq)
            )
        return cls(schema, cols)

    @classmethod
    def from_arrays(cls, schema: Schema, arrays: Mapping[str, Any]) -> Dataset:
        """Fast path for numpy input: NaN marks missing numerical cells."""
        cols: dict[str, Column] = {}
        for a in schema.attributes:
            if a.kind is Kind.NUMERICAL:
                v = np.array(arrays[a.name], dtype=np.float64)
                miss = np.isnan(v)
                if np.isinf(v).any():
                    raise ValueError(f"column {a.name!r} has infinite values")
                v[miss] = 0.0
                cols[a.name] = NumericColumn(_freeze(v), _freeze(miss))
            else:
                cols[a.name] = _categorical_column(list(arrays[a.name]))
        return cls(schema, cols)

    @classmethod
    def from_rows(cls, schema: Schema, rows: Iterable[Sequence[Any]]) -> Dataset:
        rows = [tuple(r) for r in rows]
        for r in rows:
            if len(r) != schema.p:
                raise SchemaError(f"row {r!r} does not have {schema.p} cells")
        return cls.from_cells(
            schema, {name: [r[h] for r in rows] for h, name in enumerate(schema.names)}
        )

    @property
    def case_ids(self) -> np.ndarray:
        return np.arange(self.n)

    def column(self, name: str) -> Column:
        return self._columns[name]

    def columns(self) -> list[Column]:
        return [self._columns[name] for name in self.schema.names]

    def cell(self, g: int, name: str) -> Cell:
        return self._columns[name].cell(g)

    def row(self, g: int) -> tuple[Cell, ...]:
        return tuple(self._columns[name].cell(g) for name in self.schema.names)

    def rows(self) -> list[tuple[Cell, ...]]:
        return [self.row(g) for g in range(self.n)]

    def take(self, ids: Sequence[int]) -> Dataset:
        """New dataset with the given rows (renumbered from 0)."""
        ids = np.asarray(ids, dtype=np.int64)
        cols: dict[str, Column] = {}
        for name, col in self._columns.items():
            if isinstance(col, NumericColumn):
                cols[name] = NumericColumn(
                    _freeze(col.values[ids].copy()), _freeze(col.missing[ids].copy())
                )
            else:
                cols[name] = CategoricalColumn(_freeze(col.codes[ids].copy()), col.categories)
        return Dataset(self.schema, cols)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and self.n == other.n and self.rows() == other.rows()

    def __repr__(self):
        return f"Dataset(n={self.n}, attributes={list(self.schema.names)})"


@dataclass(frozen=True)
class LabeledDataset:
    data: Dataset
    labels: tuple[str, ...]  # each in LABELS

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != self.data.n:
            raise ValueError(f"{len(labels)} labels for {self.data.n} cases")
        bad = set(labels) - set(LABELS)
        if bad:
            raise ValueError(f"unknown labels {sorted(bad)}")

    @property
    def is_anomaly(self) -> np.ndarray:
        return np.array([lab != "normal" for lab in self.labels])

    def anomaly_ids(self, kind: str | None = None) -> list[int]:
        if kind is None:
            return [g for g, lab in enumerate(self.labels) if lab != "normal"]
        return [g for g, lab in enumerate(self.labels) if lab == kind]


# ---------------------------------------------------------------- parsing


def _parse_finite(text: str) -> float | None:
    try:
        x = float(text)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def _split_rows(rows: Iterable[str | Sequence[str]]) -> list[list[str]]:
    out = []
    for r in rows:
        if isinstance(r, str):
            out.extend(list(x) for x in csv.reader(io.StringIO(r)))
        else:
            out.append(list(r))
    return out


def infer_schema(
    header: str | Sequence[str],
    sample_rows: Iterable[str | Sequence[str]],
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
) -> Schema:
    """Numerical iff every non-missing sample cell parses as a finite real."""
    names = _split_rows([header])[0] if isinstance(header, str) else list(header)
    if not names or all(n == "" for n in names):
        raise SchemaError("empty header")
    missing_tokens = frozenset(missing_tokens)
    rows = _split_rows(sample_rows)
    numeric = [True] * len(names)
    for r in rows:
        if len(r) != len(names):
            raise CSVFormatError(f"sample row {r!r} has {len(r)} cells, expected {len(names)}")
        for h, cell in enumerate(r):
            if numeric[h] and cell not in missing_tokens and _parse_finite(cell) is None:
                numeric[h] = False
    return Schema(
        tuple(
            Attribute(name, Kind.NUMERICAL if num else Kind.CATEGORICAL)
            for name, num in zip(names, numeric)
        )
    )


def load_csv(
    path: str | os.PathLike,
    schema: Schema | None = None,
    missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS,
) -> Dataset:
    """Read a header-first CSV file.

    Without ``schema`` the column kinds are inferred from all rows. The header
    must name the schema's attributes in schema order.
    """
    missing_tokens = frozenset(missing_tokens)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError("empty file: no header row", line=1) from None
        body = []
        for row in reader:
            body.append((reader.line_num, row))
    if schema is None:
        for line, row in body:
            if row and len(row) != len(header):
                raise CSVFormatError(
                    f"line {line}: expected {len(header)} cells, found {len(row)}", line=line
                )
        schema = infer_schema(header, [r for _, r in body if r], missing_tokens)
    elif list(header) != list(schema.names):
        raise CSVFormatError(
            f"header {header} does not match schema attributes {list(schema.names)}", line=1
        )

    p = schema.p
    kinds = [a.kind for a in schema.attributes]
    cells: list[list[Any]] = [[] for _ in range(p)]
    for line, row in body:
        if not row:
            continue
        if len(row) != p:
            raise CSVFormatError(f"line {line}: expected {p} cells, found {len(row)}", line=line)
        for h, text in enumerate(row):
            if text in missing_tokens:
                cells[h].append(MISSING)
            elif kinds[h] is Kind.NUMERICAL:
                x = _parse_finite(text)
                if x is None:
                    raise CSVFormatError(
                        f"line {line}, column {schema.names[h]!r}: "
                        f"{text!r} is not a finite number",
                        line=line,
                        column=schema.names[h],
                    )
                cells[h].append(x)
            else:
                cells[h].append(text)
    return Dataset.from_cells(schema, dict(zip(schema.names, cells)))


def format_number(x: float) -> str:
    """Shortest text that parses back to the same double; integers without '.0'."""
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def write_csv(data: Dataset, path: str | os.PathLike, missing_token: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.schema.names)
        for row in data.rows():
            w.writerow(
                missing_token if c is MISSING else (c if isinstance(c, str) else format_number(c))
                for c in row
            )


def min_ranks(scores: Sequence[float]) -> np.ndarray:
    """Rank 1 = lowest score; tied scores share the smallest rank of their group."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    first = np.ones(len(s), dtype=bool)
    first[1:] = sorted_s[1:] != sorted_s[:-1]
    start_pos = np.maximum.accumulate(np.where(first, np.arange(len(s)), 0))
    ranks = np.empty(len(s), dtype=np.int64)
    ranks[order] = start_pos + 1
    return ranks


def write_scores(result: DetectionResult | Sequence[float], path: str | os.PathLike) -> None:
    """Write ``case_id,aas,rank`` rows ordered by case id."""
    scores = np.asarray(getattr(result, "scores", result), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot write an empty score vector")
    ranks = min_ranks(scores)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case_id", "aas", "rank"])
        for g, (v, r) in enumerate(zip(scores, ranks)):
            w.writerow([g, format_number(v), int(r)])


def read_scores(path: str | os.PathLike) -> dict[int, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"case_id", "aas"} <= set(reader.fieldnames):
            raise CSVFormatError("score file needs case_id and aas columns", line=1)
        return {int(r["case_id"]): float(r["aas"]) for r in reader}


def write_labels(labeled: LabeledDataset, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case_id", "label"])
        for g, lab in enumerate(labeled.labels):
            w.writerow([g, lab])


def read_labels(path: str | os.PathLike) -> dict[int, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"case_id", "label"} <= set(reader.fieldnames):
            raise CSVFormatError("label file needs case_id and label columns", line=1)
        out = {}
        for r in reader:
            if r["label"] not in LABELS:
                raise CSVFormatError(
                    f"line {reader.line_num}: unknown label {r['label']!r}", line=reader.line_num
                )
            out[int(r["case_id"])] = r["label"]
        return out
