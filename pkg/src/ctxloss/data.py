"""Loss/context tables: CSV ingestion, schema inference, uniform binning.

The pipeline operates on fully discrete data. Non-numeric feature columns
keep their observed labels as categories. Numeric columns with few distinct
values are treated as coded categories; numeric columns with many distinct
values are binned into uniform-width intervals fitted on the ingested
table, with out-of-range values clamped to the edge bins. All container
types are immutable after construction and safe to share between threads.

Diagnostics refer to data rows 1-based, header excluded.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

CATEGORICAL = "categorical"
NUMERICAL = "numerical"

# Discrete loss supports are expected to be small; larger ones still work
# but usually signal an undigitized continuous loss.
_SUPPORT_WARN_SIZE = 32


class ValidationError(ValueError):
    """Input data or configuration breaks a documented contract."""


def _canon_number(x) -> str:
    """Canonical label for a numeric category: '3' rather than '3.0'."""
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _as_numeric(values: np.ndarray):
    """Float64 view of a column if every entry parses to a finite float, else None."""
    if values.dtype.kind in "fiu":
        arr = np.asarray(values, dtype=np.float64)
    else:
        try:
            arr = values.astype(np.float64)
        except (TypeError, ValueError):
            return None
    return arr if np.isfinite(arr).all() else None


@dataclass(frozen=True)
class LossSupport:
    """Sorted distinct loss values: the discrete, bounded loss domain."""

    values: tuple

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size == 0:
            raise ValidationError("loss support is empty")
        if not np.isfinite(arr).all():
            raise ValidationError("loss support contains non-finite values")
        if arr.size > 1 and not (np.diff(arr) > 0).all():
            raise ValidationError("loss support must be strictly ascending")
        object.__setattr__(self, "values", tuple(float(v) for v in arr))

    @classmethod
    def from_losses(cls, losses) -> "LossSupport":
        values = np.unique(np.asarray(losses, dtype=np.float64))
        if values.size > _SUPPORT_WARN_SIZE:
            warnings.warn(
                f"loss support has {values.size} distinct values; expected a "
                "small discrete domain (is the loss discretized?)",
                stacklevel=2,
            )
        return cls(tuple(values))

    @property
    def max_loss(self) -> float:
        return self.values[-1]

    @property
    def min_loss(self) -> float:
        return self.values[0]

    @property
    def is_binary(self) -> bool:
        return set(self.values) <= {0.0, 1.0}

    def codes(self, losses) -> np.ndarray:
        """Support index of each loss value; rejects values off the support."""
        arr = np.asarray(losses, dtype=np.float64)
        vals = np.asarray(self.values)
        idx = np.clip(np.searchsorted(vals, arr), 0, vals.size - 1)
        bad = vals[idx] != arr
        if bad.any():
            raise ValidationError(
                f"loss value {arr[bad][0]!r} is outside the recorded support"
            )
        return idx.astype(np.int64)


@dataclass(frozen=True)
class FeatureDescriptor:
    """One context feature: its kind and discrete value structure.

    A numerical descriptor fresh out of schema inference carries only its
    provisional (min, max) range, stored as a single pair of edges; binning
    replaces it with the full edge list. Bin b covers [edges[b], edges[b+1]),
    with the last bin closed on the right.
    """

    name: str
    kind: str
    categories: tuple = None
    bin_edges: tuple = None

    def __post_init__(self):
        if not self.name:
            raise ValidationError("feature name must be non-empty")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise ValidationError(f"feature {self.name!r}: categories required")
            if self.bin_edges is not None:
                raise ValidationError(f"feature {self.name!r}: categorical features carry no bin edges")
            cats = tuple(str(c) for c in self.categories)
            if len(set(cats)) != len(cats):
                raise ValidationError(f"feature {self.name!r}: duplicate categories")
            object.__setattr__(self, "categories", cats)
        elif self.kind == NUMERICAL:
            if self.categories is not None:
                raise ValidationError(f"feature {self.name!r}: numerical features carry no categories")
            edges = np.asarray(self.bin_edges if self.bin_edges is not None else (), dtype=np.float64)
            if edges.size < 2:
                raise ValidationError(f"feature {self.name!r}: at least two bin edges required")
            if not np.isfinite(edges).all() or not (np.diff(edges) > 0).all():
                raise ValidationError(f"feature {self.name!r}: bin edges must be finite and strictly ascending")
            object.__setattr__(self, "bin_edges", tuple(float(e) for e in edges))
        else:
            raise ValidationError(f"feature {self.name!r}: unknown kind {self.kind!r}")

    @property
    def cardinality(self) -> int:
        if self.kind == CATEGORICAL:
            return len(self.categories)
        return len(self.bin_edges) - 1

    @property
    def is_provisional(self) -> bool:
        """True for an unbinned numerical descriptor (range only)."""
        return self.kind == NUMERICAL and self.cardinality == 1

    def labels(self) -> tuple:
        if self.kind == CATEGORICAL:
            return self.categories
        e = self.bin_edges
        return tuple(f"[{e[b]:.6g}, {e[b + 1]:.6g})" for b in range(len(e) - 1))

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            out["categories"] = list(self.categories)
        else:
            out["bin_edges"] = list(self.bin_edges)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureDescriptor":
        return cls(
            name=d["name"],
            kind=d["kind"],
            categories=tuple(d["categories"]) if "categories" in d else None,
            bin_edges=tuple(d["bin_edges"]) if "bin_edges" in d else None,
        )


@dataclass(frozen=True)
class ContextSchema:
    """Ordered feature descriptors; order defines the feature index."""

    features: tuple

    def __post_init__(self):
        feats = tuple(self.features)
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")
        object.__setattr__(self, "features", feats)

    @property
    def names(self) -> tuple:
        return tuple(f.name for f in self.features)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise ValidationError(f"unknown feature {name!r}")

    def feature(self, selector) -> FeatureDescriptor:
        if isinstance(selector, str):
            return self.features[self.index_of(selector)]
        return self.features[selector]

    def to_dict(self) -> dict:
        return {"features": [f.to_dict() for f in self.features]}

    @classmethod
    def from_dict(cls, d: dict) -> "ContextSchema":
        return cls(tuple(FeatureDescriptor.from_dict(f) for f in d["features"]))


@dataclass(frozen=True)
class RawTable:
    """Parsed but undiscretized records, one column per feature.

    Columns hold either float64 arrays or string arrays; numeric detection
    happens at schema inference. ``losses`` is None for context-only records
    (operating-domain samples carry no loss labels).
    """

    feature_names: tuple
    columns: tuple
    losses: np.ndarray = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.feature_names)
        cols = tuple(np.asarray(c) for c in self.columns)
        if len(names) != len(cols):
            raise ValidationError("feature_names and columns disagree in length")
        if not cols:
            raise ValidationError("at least one context feature is required")
        n = cols[0].shape[0]
        if any(c.ndim != 1 or c.shape[0] != n for c in cols):
            raise ValidationError("all columns must be 1-D and equally long")
        if n == 0:
            raise ValidationError("table has no rows")
        losses = self.losses
        if losses is not None:
            losses = np.asarray(losses, dtype=np.float64)
            if losses.shape != (n,):
                raise ValidationError("losses length must match the context rows")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "losses", losses)

    @property
    def n(self) -> int:
        return self.columns[0].shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[self.feature_names.index(name)]
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None


@dataclass(frozen=True)
class ContextTable:
    """Discrete context codes without loss labels."""

    schema: ContextSchema
    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64, copy=True)
        if codes.ndim != 2 or codes.shape[1] != len(self.schema):
            raise ValidationError("codes must be an (N, J) matrix matching the schema")
        if codes.shape[0] == 0:
            raise ValidationError("table has no rows")
        for j, feat in enumerate(self.schema):
            col = codes[:, j]
            if col.min() < 0 or col.max() >= feat.cardinality:
                raise ValidationError(
                    f"feature {feat.name!r}: code outside [0, {feat.cardinality})"
                )
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def n(self) -> int:
        return self.codes.shape[0]


@dataclass(frozen=True)
class SampleTable:
    """Discrete loss/context record set: N losses plus an N x J code matrix."""

    schema: ContextSchema
    losses: np.ndarray
    codes: np.ndarray
    support: LossSupport

    def __post_init__(self):
        losses = np.array(self.losses, dtype=np.float64, copy=True)
        codes = np.array(self.codes, dtype=np.int64, copy=True)
        if codes.ndim != 2 or codes.shape[1] != len(self.schema):
            raise ValidationError("codes must be an (N, J) matrix matching the schema")
        if losses.ndim != 1 or losses.shape[0] != codes.shape[0]:
            raise ValidationError("losses and context rows must align")
        if losses.shape[0] == 0:
            raise ValidationError("table has no rows")
        for j, feat in enumerate(self.schema):
            col = codes[:, j]
            if col.min() < 0 or col.max() >= feat.cardinality:
                raise ValidationError(
                    f"feature {feat.name!r}: code outside [0, {feat.cardinality})"
                )
        self.support.codes(losses)  # rejects losses off the support
        losses.setflags(write=False)
        codes.setflags(write=False)
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "codes", codes)

    @property
    def n(self) -> int:
        return self.losses.shape[0]

    @property
    def j(self) -> int:
        return self.codes.shape[1]

    @cached_property
    def loss_codes(self) -> np.ndarray:
        codes = self.support.codes(self.losses)
        codes.setflags(write=False)
        return codes

    def subset(self, indices) -> "SampleTable":
        """Row subset; keeps the parent schema and loss support."""
        idx = np.asarray(indices)
        return SampleTable(self.schema, self.losses[idx], self.codes[idx], self.support)

    def context_table(self) -> ContextTable:
        return ContextTable(self.schema, self.codes)


def load_samples(path, loss_column: str) -> RawTable:
    """Read a loss/context CSV: header row, one loss column, the rest features.

    Missing values are not supported; an empty cell, a short row, or an
    unparseable loss is rejected with the 1-based data row number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    header, rows = _read_csv(path)
    if loss_column not in header:
        raise ValidationError(f"loss column {loss_column!r} not found in header {header}")
    loss_idx = header.index(loss_column)
    losses = np.empty(len(rows), dtype=np.float64)
    for r, row in enumerate(rows, start=1):
        raw = row[loss_idx]
        try:
            value = float(raw)
        except ValueError:
            raise ValidationError(f"row {r}: loss value {raw!r} is not numeric") from None
        if not np.isfinite(value):
            raise ValidationError(f"row {r}: loss value {raw!r} is not finite")
        losses[r - 1] = value
    names = [h for i, h in enumerate(header) if i != loss_idx]
    if not names:
        raise ValidationError("no context feature columns beside the loss column")
    columns = _extract_columns(header, rows, names)
    return RawTable(tuple(names), columns, losses)


def load_context_records(path, schema: ContextSchema) -> RawTable:
    """Read context-only records (no loss labels) for the schema's features.

    The CSV must contain every schema feature column; extra columns are
    ignored.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    header, rows = _read_csv(path)
    missing = [n for n in schema.names if n not in header]
    if missing:
        raise ValidationError(f"context file {path} lacks feature columns {missing}")
    columns = _extract_columns(header, rows, list(schema.names))
    return RawTable(schema.names, columns, None)


def _read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        rows = []
        for r, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValidationError(
                    f"row {r}: expected {len(header)} fields, got {len(row)}"
                )
            for i, cell in enumerate(row):
                if cell == "":
                    raise ValidationError(
                        f"row {r}: missing value in column {header[i]!r}"
                    )
            rows.append(row)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return header, rows


def _extract_columns(header, rows, names):
    positions = [header.index(n) for n in names]
    return tuple(np.array([row[p] for row in rows]) for p in positions)


def infer_schema(raw: RawTable, max_numeric_levels: int = 10) -> ContextSchema:
    """Classify each feature column of an undiscretized table.

    Numeric columns with at most ``max_numeric_levels`` distinct values
    become coded categories; numeric columns with more become numerical
    descriptors carrying their provisional (min, max) range. Everything else
    is categorical over its sorted distinct labels. A column with fewer than
    two distinct values carries no information and is rejected.
    """
    if max_numeric_levels < 1:
        raise ValidationError("max_numeric_levels must be >= 1")
    descriptors = []
    for name, col in zip(raw.feature_names, raw.columns):
        numeric = _as_numeric(col)
        if numeric is not None:
            levels = np.unique(numeric)
            if levels.size < 2:
                raise ValidationError(
                    f"feature {name!r} has a single distinct value; it carries no information"
                )
            if levels.size <= max_numeric_levels:
                cats = tuple(_canon_number(v) for v in levels)
                descriptors.append(FeatureDescriptor(name, CATEGORICAL, categories=cats))
            else:
                descriptors.append(
                    FeatureDescriptor(
                        name, NUMERICAL, bin_edges=(float(levels[0]), float(levels[-1]))
                    )
                )
        else:
            cats = sorted(set(str(v) for v in col))
            if len(cats) < 2:
                raise ValidationError(
                    f"feature {name!r} has a single distinct value; it carries no information"
                )
            descriptors.append(FeatureDescriptor(name, CATEGORICAL, categories=tuple(cats)))
    return ContextSchema(tuple(descriptors))


def finalize_schema(schema: ContextSchema, bins: int = 10) -> ContextSchema:
    """Replace provisional numerical ranges with uniform-width bin edges."""
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    out = []
    for feat in schema:
        if feat.is_provisional:
            lo, hi = feat.bin_edges
            if lo == hi:
                raise ValidationError(
                    f"feature {feat.name!r}: zero-width numeric range [{lo}, {hi}]"
                )
            edges = tuple(float(e) for e in np.linspace(lo, hi, bins + 1))
            out.append(FeatureDescriptor(feat.name, NUMERICAL, bin_edges=edges))
        else:
            out.append(feat)
    return ContextSchema(tuple(out))


def _encode_feature(values: np.ndarray, feat: FeatureDescriptor) -> np.ndarray:
    if feat.kind == NUMERICAL:
        numeric = _as_numeric(values)
        if numeric is None:
            raise ValidationError(
                f"feature {feat.name!r}: non-numeric value in a numerical column"
            )
        edges = np.asarray(feat.bin_edges)
        # Interior-edge search gives [a, b) bins and clamps out-of-range
        # values into the nearest edge bin.
        return np.searchsorted(edges[1:-1], numeric, side="right").astype(np.int64)
    numeric = _as_numeric(values)
    cat_numeric = _as_numeric(np.asarray(feat.categories))
    if numeric is not None and cat_numeric is not None:
        lookup = np.sort(cat_numeric)
        idx = np.clip(np.searchsorted(lookup, numeric), 0, lookup.size - 1)
        bad = lookup[idx] != numeric
        if bad.any():
            raise ValidationError(
                f"feature {feat.name!r}: value {numeric[bad][0]!r} is not a known category"
            )
        # Map positions in the sorted numeric levels back to category order.
        order = np.argsort(cat_numeric)
        return order[idx].astype(np.int64)
    mapping = {c: i for i, c in enumerate(feat.categories)}
    if numeric is not None:
        labels = [_canon_number(v) for v in numeric]
    else:
        labels = [str(v) for v in values]
    codes = np.empty(len(labels), dtype=np.int64)
    for i, label in enumerate(labels):
        try:
            codes[i] = mapping[label]
        except KeyError:
            raise ValidationError(
                f"feature {feat.name!r}: value {label!r} is not a known category"
            ) from None
    return codes


def encode_contexts(raw: RawTable, schema: ContextSchema) -> ContextTable:
    """Map raw feature values onto schema codes (pure and repeatable)."""
    for feat in schema:
        if feat.is_provisional:
            raise ValidationError(
                f"feature {feat.name!r}: schema still provisional, run discretize first"
            )
    codes = np.empty((raw.n, len(schema)), dtype=np.int64)
    for j, feat in enumerate(schema):
        codes[:, j] = _encode_feature(raw.column(feat.name), feat)
    return ContextTable(schema, codes)


def discretize(raw, schema: ContextSchema, bins: int = 10) -> SampleTable:
    """Bin numerical features and encode every row onto the context grid.

    Passing an already-discretized table with the same schema is the
    identity.
    """
    if isinstance(raw, SampleTable):
        if raw.schema != schema:
            raise ValidationError("table was discretized under a different schema")
        return raw
    if raw.losses is None:
        raise ValidationError("raw table carries no losses; use encode_contexts for context-only records")
    final = finalize_schema(schema, bins)
    contexts = encode_contexts(raw, final)
    support = LossSupport.from_losses(raw.losses)
    return SampleTable(final, raw.losses, contexts.codes, support)


def empirical_loss(table: SampleTable) -> float:
    """Mean loss over all rows, summed in value order so the result is
    bit-identical under any row permutation."""
    return float(np.sort(table.losses).sum() / table.n)
