"""Tabular data handling: schemas, CSV ingestion, binarization and min-max encoding.

Everything downstream (classifiers, generative models, recourse methods and the
evaluation measures) works on the *encoded* representation produced here: one
column per feature, continuous columns affinely mapped to ``[0, 1]`` and
categorical columns collapsed to a single ``{0, 1}`` indicator of their most
frequent level.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import yaml

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary_categorical"
KINDS = (CONTINUOUS, BINARY)

FREE = "free"
INCREASE_ONLY = "increase_only"
DECREASE_ONLY = "decrease_only"
DIRECTIONS = (FREE, INCREASE_ONLY, DECREASE_ONLY)

MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null", "None"})


class SchemaError(ValueError):
    """Raised when a schema is inconsistent or does not match a data file."""


class DataError(ValueError):
    """Raised for malformed data, e.g. a cell that cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class FeatureSchema:
    """Description of one input feature.

    ``raw_min``/``raw_max`` are optional declared bounds for continuous features;
    when absent they are taken from the training data at scaling time.
    ``positive_level`` is the categorical level encoded as 1. Leave it unset to
    use the most frequent level.
    """

    name: str
    kind: str = CONTINUOUS
    immutable: bool = False
    direction: str = FREE
    raw_min: float | None = None
    raw_max: float | None = None
    positive_level: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise SchemaError(f"feature {self.name!r}: unknown direction {self.direction!r}")
        if self.kind == CONTINUOUS and self.raw_min is not None and self.raw_max is not None:
            if not self.raw_min < self.raw_max:
                raise SchemaError(
                    f"feature {self.name!r}: raw_min ({self.raw_min}) must be < raw_max ({self.raw_max})"
                )

    @property
    def is_binary(self) -> bool:
        return self.kind == BINARY


def _check_schema(schema: Sequence[FeatureSchema]) -> tuple[FeatureSchema, ...]:
    names = [f.name for f in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate feature names: {dupes}")
    return tuple(schema)


@dataclass(frozen=True)
class Dataset:
    """Raw (unscaled) tabular data with its schema.

    ``rows`` holds one column per schema feature in schema order. Categorical
    columns hold strings until :func:`binarize_categoricals` is applied, after
    which every column is numeric.
    """

    schema: tuple[FeatureSchema, ...]
    rows: pd.DataFrame
    target: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "schema", _check_schema(self.schema))
        if list(self.rows.columns) != self.feature_names:
            raise SchemaError(
                f"row columns {list(self.rows.columns)} do not match schema {self.feature_names}"
            )
        target = np.asarray(self.target, dtype=np.int64)
        if target.shape != (len(self.rows),):
            raise DataError(f"target has shape {target.shape}, expected ({len(self.rows)},)")
        if target.size and not np.isin(target, (0, 1)).all():
            raise DataError("target values must be 0 or 1")
        target.setflags(write=False)
        object.__setattr__(self, "target", target)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def d(self) -> int:
        return len(self.schema)

    @property
    def is_binarized(self) -> bool:
        return all(pd.api.types.is_numeric_dtype(self.rows[f.name]) for f in self.schema)

    def subset(self, index: np.ndarray, name: str | None = None) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.schema,
            self.rows.iloc[index].reset_index(drop=True),
            self.target[index],
            name or self.name,
        )


def immutable_mask(schema: Sequence[FeatureSchema]) -> np.ndarray:
    return np.array([f.immutable for f in schema], dtype=bool)


def binary_mask(schema: Sequence[FeatureSchema]) -> np.ndarray:
    return np.array([f.is_binary for f in schema], dtype=bool)


# --------------------------------------------------------------------------- loading

def _parse_target(values: pd.Series, positive_target, first_line: int) -> np.ndarray:
    if positive_target is not None:
        return (values.astype(str).str.strip() == str(positive_target)).to_numpy(dtype=np.int64)
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        try:
            num = float(v)
        except ValueError:
            raise DataError(f"target value {v!r} is not 0/1; pass positive_target", first_line + i)
        if num not in (0.0, 1.0):
            raise DataError(f"target value {v!r} is not 0/1; pass positive_target", first_line + i)
        out[i] = int(num)
    return out


def load_csv(
    path: str | Path,
    schema: Sequence[FeatureSchema],
    target_name: str,
    positive_target=None,
    name: str | None = None,
) -> Dataset:
    """Read a header-row CSV into a :class:`Dataset`.

    Rows with any missing cell (empty, ``?``, ``NA`` ...) in a schema or target
    column are dropped. Continuous cells must parse as floats; otherwise a
    :class:`DataError` naming the file line is raised. If ``positive_target``
    is given, the target is 1 where the raw value equals it, otherwise the
    target column must already be 0/1.
    """
    path = Path(path)
    schema = _check_schema(schema)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    raw.columns = [c.strip() for c in raw.columns]
    wanted = [f.name for f in schema] + [target_name]
    missing_cols = [c for c in wanted if c not in raw.columns]
    if missing_cols:
        raise SchemaError(f"{path.name}: missing columns {missing_cols}")
    raw = raw[wanted]
    # header is line 1, first data row is line 2
    lines = np.arange(len(raw)) + 2
    stripped = raw.apply(lambda col: col.str.strip())
    keep = ~stripped.isin(MISSING_TOKENS).any(axis=1).to_numpy()
    n_dropped = int((~keep).sum())
    stripped = stripped[keep].reset_index(drop=True)
    lines = lines[keep]

    cols = {}
    for feat in schema:
        col = stripped[feat.name]
        if feat.kind == CONTINUOUS:
            parsed = pd.to_numeric(col, errors="coerce")
            bad = parsed.isna().to_numpy()
            if bad.any():
                i = int(np.argmax(bad))
                raise DataError(f"column {feat.name!r}: cannot parse {col.iloc[i]!r} as a number", int(lines[i]))
            cols[feat.name] = parsed.to_numpy(dtype=float)
        else:
            cols[feat.name] = col.to_numpy(dtype=object)
    rows = pd.DataFrame(cols, columns=[f.name for f in schema])
    target = _parse_target(stripped[target_name], positive_target, 2) if len(stripped) else np.zeros(0, np.int64)
    logger.info("loaded %s: %d rows kept, %d dropped for missing values", path.name, len(rows), n_dropped)
    return Dataset(schema, rows, target, name or path.stem.split(".")[0])


def load_schema_config(path: str | Path) -> dict:
    """Parse a YAML schema file.

    Format::

        target: income            # target column name
        positive_target: ">50K"   # optional; raw value mapped to y = 1
        features:
          age: {kind: continuous, immutable: true}
          sex: {kind: binary_categorical, immutable: true}
          hours-per-week: {kind: continuous, direction: free, raw_min: 1, raw_max: 99}

    Returns ``{"schema": [...], "target": str, "positive_target": value-or-None}``.
    Feature order in the file is the column order of the encoded data.
    """
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "features" not in doc or "target" not in doc:
        raise SchemaError(f"{path}: schema file needs 'target' and 'features' keys")
    allowed = {"kind", "immutable", "direction", "raw_min", "raw_max", "positive_level"}
    schema = []
    for fname, spec in doc["features"].items():
        spec = spec or {}
        unknown = set(spec) - allowed
        if unknown:
            raise SchemaError(f"{path}: feature {fname!r} has unknown keys {sorted(unknown)}")
        if "positive_level" in spec and spec["positive_level"] is not None:
            spec = {**spec, "positive_level": str(spec["positive_level"])}
        schema.append(FeatureSchema(name=str(fname), **spec))
    return {
        "schema": schema,
        "target": str(doc["target"]),
        "positive_target": doc.get("positive_target"),
        "description": doc.get("description", ""),
        "file": doc.get("file"),
    }


# --------------------------------------------------------------------------- transforms

def most_frequent_level(values: Iterable) -> str:
    """Most frequent level; ties go to the lexicographically smallest name."""
    counts = pd.Series(list(values), dtype=object).astype(str).value_counts()
    if counts.empty:
        raise DataError("cannot pick a level from an empty column")
    top = counts.max()
    return sorted(counts.index[counts == top])[0]


def binarize_categoricals(ds: Dataset) -> Dataset:
    """Collapse each categorical column to ``1`` for its positive level, else ``0``.

    Columns that are already numeric are left untouched, which makes the
    operation idempotent.
    """
    rows = ds.rows.copy()
    schema = []
    for feat in ds.schema:
        col = rows[feat.name]
        if feat.is_binary and not pd.api.types.is_numeric_dtype(col):
            level = feat.positive_level
            if level is None:
                level = most_frequent_level(col) if len(col) else None
            rows[feat.name] = (col.astype(str) == level).astype(float) if level is not None else col.astype(float)
            feat = replace(feat, positive_level=level)
        elif feat.is_binary:
            if len(col) and not np.isin(col.to_numpy(), (0.0, 1.0)).all():
                raise DataError(f"numeric binary column {feat.name!r} has values outside {{0, 1}}")
        schema.append(feat)
    return Dataset(tuple(schema), rows, ds.target, ds.name)


@dataclass(frozen=True)
class EncodedDataset:
    """Min-max encoded feature matrix.

    ``scaling_params`` holds ``(raw_min, raw_max)`` per feature; binary
    features use ``(0, 1)`` so the map is the identity for them.
    """

    matrix: np.ndarray
    target: np.ndarray
    scaling_params: tuple[tuple[float, float], ...]
    schema: tuple[FeatureSchema, ...]
    name: str = "dataset"
    parent: Dataset | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        t = np.array(self.target, dtype=np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "target", t)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    @property
    def immutable_mask(self) -> np.ndarray:
        return immutable_mask(self.schema)

    @property
    def binary_mask(self) -> np.ndarray:
        return binary_mask(self.schema)

    def _lo_span(self):
        lo = np.array([p[0] for p in self.scaling_params])
        hi = np.array([p[1] for p in self.scaling_params])
        return lo, hi - lo

    def encode(self, raw) -> np.ndarray:
        lo, span = self._lo_span()
        return (np.asarray(raw, dtype=float) - lo) / span

    def decode(self, encoded) -> np.ndarray:
        lo, span = self._lo_span()
        return np.asarray(encoded, dtype=float) * span + lo

    def with_rows(self, index: np.ndarray) -> "EncodedDataset":
        index = np.asarray(index)
        return replace(self, matrix=self.matrix[index], target=self.target[index], parent=None)

    def to_csv(self, path: str | Path) -> None:
        df = pd.DataFrame(self.matrix, columns=self.feature_names)
        df["target"] = self.target
        df.to_csv(path, index=False, float_format="%.17g")


def fit_scaling(ds: Dataset) -> tuple[tuple[float, float], ...]:
    """Per-feature ``(raw_min, raw_max)``; declared schema bounds take precedence."""
    if not ds.is_binarized:
        raise DataError("binarize categoricals before scaling")
    params = []
    for feat in ds.schema:
        if feat.is_binary:
            params.append((0.0, 1.0))
            continue
        col = ds.rows[feat.name].to_numpy(dtype=float)
        lo = feat.raw_min if feat.raw_min is not None else (float(col.min()) if col.size else math.nan)
        hi = feat.raw_max if feat.raw_max is not None else (float(col.max()) if col.size else math.nan)
        if not hi > lo:
            raise DataError(
                f"feature {feat.name!r} is constant (min = max = {lo}); remove it from the schema before scaling"
            )
        params.append((float(lo), float(hi)))
    return tuple(params)


def minmax_scale(ds: Dataset, params: Sequence[tuple[float, float]] | None = None) -> EncodedDataset:
    """Encode ``ds`` with ``(v - raw_min) / (raw_max - raw_min)`` per continuous column.

    Pass ``params`` (e.g. from the training split) to reuse an existing fit.
    """
    if not ds.is_binarized:
        raise DataError("binarize categoricals before scaling")
    if params is None:
        params = fit_scaling(ds)
    params = tuple((float(a), float(b)) for a, b in params)
    if len(params) != ds.d:
        raise SchemaError(f"got {len(params)} scaling params for {ds.d} features")
    raw = ds.rows.to_numpy(dtype=float)
    lo = np.array([p[0] for p in params])
    span = np.array([p[1] - p[0] for p in params])
    schema = tuple(
        replace(f, raw_min=p[0], raw_max=p[1]) if not f.is_binary else f
        for f, p in zip(ds.schema, params)
    )
    return EncodedDataset((raw - lo) / span, ds.target, params, schema, ds.name, ds)


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffled split into ``(train, test)``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_train = int(round(train_fraction * ds.n))
    return ds.subset(perm[:n_train]), ds.subset(perm[n_train:])


def synthetic_generate(n: int, correlation: float, seed: int, noise: float = 0.5) -> Dataset:
    """Two correlated Gaussian features with ``y = 1[x1 + x2 + noise > 0]``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not -1.0 <= correlation <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    rng = np.random.default_rng(seed)
    cov = np.array([[1.0, correlation], [correlation, 1.0]])
    x = rng.multivariate_normal(np.zeros(2), cov, size=n, method="cholesky" if abs(correlation) < 1 else "eigh")
    y = (x[:, 0] + x[:, 1] + noise * rng.standard_normal(n) > 0).astype(np.int64)
    schema = (FeatureSchema("x1"), FeatureSchema("x2"))
    return Dataset(schema, pd.DataFrame(x, columns=["x1", "x2"]), y, "synthetic")
