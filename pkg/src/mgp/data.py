"""Tabular data model: ingestion, standardization, encoding, splitting.

Features are either continuous or categorical with a declared (or inferred)
level set; the response is continuous or K-class categorical. Categorical
values are stored as integer codes into the schema's level list. All derived
objects are immutable values after construction.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # CONTINUOUS or CATEGORICAL
    levels: tuple | None = None  # None for continuous, or to infer from data

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise DataError(f"unknown column kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class DataSchema:
    features: tuple
    response: ColumnSpec

    @property
    def n_classes(self):
        if self.response.kind != CATEGORICAL:
            return None
        return len(self.response.levels)


@dataclass(frozen=True)
class Dataset:
    """n rows of features plus a response, stored column-wise.

    feature_cols[j] is a float array (continuous) or an int code array
    (categorical, codes indexing schema.features[j].levels).
    """

    schema: DataSchema
    feature_cols: tuple
    response: np.ndarray

    def __post_init__(self):
        n = len(self.response)
        if n < 1:
            raise DataError("dataset must contain at least one row")
        if len(self.feature_cols) != len(self.schema.features):
            raise DataError("feature column count does not match schema")
        for spec, col in zip(self.schema.features, self.feature_cols):
            if len(col) != n:
                raise DataError(f"column {spec.name!r} has length {len(col)} != {n}")
            if spec.kind == CATEGORICAL:
                if spec.levels is None:
                    raise DataError(f"categorical column {spec.name!r} lacks levels")
                if len(col) and (col.min() < 0 or col.max() >= len(spec.levels)):
                    raise DataError(f"categorical code out of range in {spec.name!r}")
        if self.schema.response.kind == CATEGORICAL:
            levels = self.schema.response.levels
            if levels is None:
                raise DataError("categorical response lacks levels")
            if self.response.min() < 0 or self.response.max() >= len(levels):
                raise DataError("response code out of range")

    @property
    def n(self):
        return len(self.response)

    @property
    def response_kind(self):
        return self.schema.response.kind

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(
            schema=self.schema,
            feature_cols=tuple(col[idx] for col in self.feature_cols),
            response=self.response[idx],
        )


@dataclass(frozen=True)
class StandardizationParams:
    """Population (divide-by-n) moments per continuous column, level orders
    per categorical column, and optional response moments."""

    feature_means: dict
    feature_stds: dict
    level_orders: dict
    response_mean: float | None = None
    response_std: float | None = None

    def __post_init__(self):
        for name, s in self.feature_stds.items():
            if not s > 0:
                raise DataError(f"standardization std must be positive for {name!r}")
        if self.response_std is not None and not self.response_std > 0:
            raise DataError("response std must be positive")


@dataclass(frozen=True)
class DesignMatrix:
    """Encoded design with a leading intercept column of ones."""

    X: np.ndarray
    y_enc: np.ndarray
    column_names: tuple

    def __post_init__(self):
        if not np.all(self.X[:, 0] == 1.0):
            raise DataError("first design column must be the intercept of ones")
        if not np.all(np.isfinite(self.X)):
            raise DataError("design matrix contains non-finite entries")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def load_csv(path, schema: DataSchema) -> Dataset:
    """Parse a comma-separated file (header row, UTF-8, '.' decimal).

    Categorical levels are collected in first-appearance order when the
    schema leaves them to infer; declared level sets are closed.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        names = [spec.name for spec in schema.features] + [schema.response.name]
        if [h.strip() for h in header] != names:
            raise DataError(
                f"{path}: header {header!r} does not match schema columns {names!r}")
        rows = list(reader)

    specs = list(schema.features) + [schema.response]
    raw_cols = [[] for _ in specs]
    for r, row in enumerate(rows, start=2):  # header is line 1
        if len(row) != len(specs):
            raise DataError(f"{path}: line {r} has {len(row)} cells, expected {len(specs)}")
        for j, (spec, cell) in enumerate(zip(specs, row)):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}: missing value at line {r}, column {spec.name!r}")
            raw_cols[j].append(cell)

    out_cols = []
    resolved = []
    for j, spec in enumerate(specs):
        cells = raw_cols[j]
        if spec.kind == CONTINUOUS:
            vals = np.empty(len(cells))
            for r, cell in enumerate(cells):
                try:
                    vals[r] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {cell!r} as a number at line "
                        f"{r + 2}, column {spec.name!r}") from None
            out_cols.append(vals)
            resolved.append(spec)
        else:
            if spec.levels is None:
                levels = []
                seen = {}
                for cell in cells:
                    if cell not in seen:
                        seen[cell] = len(levels)
                        levels.append(cell)
                codes = np.array([seen[c] for c in cells], dtype=np.int64)
                resolved.append(ColumnSpec(spec.name, CATEGORICAL, tuple(levels)))
            else:
                index = {lv: i for i, lv in enumerate(spec.levels)}
                codes = np.empty(len(cells), dtype=np.int64)
                for r, cell in enumerate(cells):
                    if cell not in index:
                        raise DataError(
                            f"{path}: unknown level {cell!r} at line {r + 2}, "
                            f"column {spec.name!r}")
                    codes[r] = index[cell]
                resolved.append(spec)
            out_cols.append(codes)

    out_schema = DataSchema(features=tuple(resolved[:-1]), response=resolved[-1])
    return Dataset(schema=out_schema, feature_cols=tuple(out_cols[:-1]),
                   response=out_cols[-1])


def fit_standardization(population: Dataset) -> StandardizationParams:
    """Population-moment (biased, divide-by-n) standardization parameters."""
    means, stds, orders = {}, {}, {}
    for spec, col in zip(population.schema.features, population.feature_cols):
        if spec.kind == CONTINUOUS:
            m = float(np.mean(col))
            v = float(np.mean((col - m) ** 2))
            if v <= 0.0:
                raise DataError(f"zero-variance continuous column {spec.name!r}")
            means[spec.name] = m
            stds[spec.name] = float(np.sqrt(v))
        else:
            orders[spec.name] = tuple(spec.levels)
    rmean = rstd = None
    if population.response_kind == CONTINUOUS:
        y = population.response
        rmean = float(np.mean(y))
        v = float(np.mean((y - rmean) ** 2))
        if v <= 0.0:
            raise DataError(f"zero-variance response {population.schema.response.name!r}")
        rstd = float(np.sqrt(v))
    return StandardizationParams(means, stds, orders, rmean, rstd)


def encode(dataset: Dataset, params: StandardizationParams) -> DesignMatrix:
    """Standardize continuous columns, one-hot categoricals (first level
    dropped), prepend an intercept, and encode the response."""
    n = dataset.n
    cols = [np.ones(n)]
    names = ["intercept"]
    for spec, col in zip(dataset.schema.features, dataset.feature_cols):
        if spec.kind == CONTINUOUS:
            cols.append((col - params.feature_means[spec.name])
                        / params.feature_stds[spec.name])
            names.append(spec.name)
        else:
            order = params.level_orders[spec.name]
            index = {lv: i for i, lv in enumerate(order)}
            try:
                remap = np.array([index[spec.levels[c]] for c in col], dtype=np.int64)
            except KeyError as exc:
                raise DataError(
                    f"unseen categorical level {exc.args[0]!r} in {spec.name!r}") from None
            for k, lv in enumerate(order):
                if k == 0:
                    continue  # first level dropped; its coefficient is fixed at 0
                cols.append((remap == k).astype(float))
                names.append(f"{spec.name}={lv}")
    X = np.column_stack(cols)
    if dataset.response_kind == CONTINUOUS:
        y = (dataset.response - params.response_mean) / params.response_std
    else:
        y = dataset.response.astype(np.int64)
    return DesignMatrix(X=X, y_enc=y, column_names=tuple(names))


@dataclass(frozen=True)
class StratumSpec:
    column: str  # feature or response column name
    bins: int | None = None  # quantile-bin count for numeric columns


def _stratum_labels(dataset: Dataset, spec: StratumSpec):
    if spec.column == dataset.schema.response.name:
        kind = dataset.response_kind
        col = dataset.response
    else:
        for cs, c in zip(dataset.schema.features, dataset.feature_cols):
            if cs.name == spec.column:
                kind, col = cs.kind, c
                break
        else:
            raise DataError(f"unknown stratum column {spec.column!r}")
    if kind == CATEGORICAL:
        return col.astype(np.int64)
    if not spec.bins or spec.bins < 1:
        raise DataError(f"numeric stratum {spec.column!r} needs a bin count")
    # Equal-count quantile bins, ties at an edge assigned to the lower bin.
    qs = np.quantile(col, np.arange(1, spec.bins) / spec.bins)
    return np.searchsorted(qs, col, side="left")


def stratified_split(dataset: Dataset, n_train: int, strata_spec, rng: RngStream) -> Dataset:
    """Draw an n_train subset without replacement, proportionally per stratum.

    Allocations use the largest-remainder rule so every stratum is within one
    row of exact proportionality. With no strata this is a simple random
    subset.
    """
    n = dataset.n
    if n_train > n:
        raise DataError(f"n_train={n_train} exceeds population size {n}")
    if not strata_spec:
        idx = rng.gen.choice(n, size=n_train, replace=False)
        return dataset.subset(np.sort(idx))

    labels = np.zeros(n, dtype=np.int64)
    for spec in strata_spec:
        labels = labels * (2 ** 20) + _stratum_labels(dataset, spec)
    keys, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if np.any(counts == 0):
        raise DataError("empty stratum")

    exact = n_train * counts / n
    alloc = np.floor(exact).astype(np.int64)
    short = n_train - int(alloc.sum())
    if short > 0:
        order = np.lexsort((np.arange(len(keys)), -(exact - alloc)))
        alloc[order[:short]] += 1
    if np.any(alloc > counts):
        k = int(np.argmax(alloc - counts))
        raise DataError(
            f"stratum {keys[k]} has {counts[k]} rows, cannot allocate {alloc[k]}")

    picked = []
    for k in range(len(keys)):
        members = np.flatnonzero(inverse == k)
        if alloc[k] > 0:
            picked.append(rng.gen.choice(members, size=int(alloc[k]), replace=False))
    idx = np.sort(np.concatenate(picked)) if picked else np.array([], dtype=np.int64)
    return dataset.subset(idx)
