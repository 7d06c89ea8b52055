"""Tabular dataset model and preprocessing operations.

A :class:`Dataset` is a typed column store: numeric-like columns (plain
numerics and calendar parts) live in float64 arrays with NaN marking missing
cells, and coded columns (categoricals and identifiers) live in int64 code
arrays with -1 marking missing and a per-column label list in first-seen
order.  All operations return new datasets; nothing mutates in place.

The preprocessing operations mirror a weekly demand-forecasting pipeline:
ingest sale-level CSV, fill or drop missing data, aggregate to one row per
(product, year, week) with a demand target, attach a popularity count from
view-event tables, and drop high-demand outlier rows.  Splitting helpers
produce train/validation/test partitions, repeated random subsets, and
k-fold plans.  A seeded synthetic generator supports desk-scale runs and
keeps its ground truth for oracle tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError, SchemaError

MISSING_CODE = -1
_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class ColumnKind(Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    IDENTIFIER = "identifier"
    YEAR = "year"
    MONTH = "month"
    WEEK = "week"
    DAY = "day"


class ColumnRole(Enum):
    FEATURE = "feature"
    TARGET = "target"
    KEY = "key"
    DROP = "drop"


CODED_KINDS = {ColumnKind.CATEGORICAL, ColumnKind.IDENTIFIER}


def is_coded(kind: ColumnKind) -> bool:
    return kind in CODED_KINDS


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    role: ColumnRole = ColumnRole.FEATURE


class Dataset:
    """Immutable-by-convention column store with a typed schema."""

    def __init__(self, schema, columns, categories=None, aux=None):
        self.schema: list[Column] = list(schema)
        self.columns: dict[str, np.ndarray] = dict(columns)
        self.categories: dict[str, list[str]] = dict(categories or {})
        self.aux: dict = dict(aux or {})
        self._validate()

    def _validate(self) -> None:
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        targets = [c for c in self.schema if c.role is ColumnRole.TARGET]
        if len(targets) > 1:
            raise SchemaError("more than one target column")
        if targets and is_coded(targets[0].kind):
            raise SchemaError(f"target column '{targets[0].name}' must be numeric")
        lengths = set()
        for col in self.schema:
            if col.name not in self.columns:
                raise SchemaError(f"column '{col.name}' missing from data")
            arr = self.columns[col.name]
            lengths.add(arr.shape[0])
            if is_coded(col.kind):
                if col.name not in self.categories:
                    raise SchemaError(f"coded column '{col.name}' has no category list")
                if arr.size and arr.max(initial=MISSING_CODE) >= len(self.categories[col.name]):
                    raise SchemaError(f"code out of range in column '{col.name}'")
        if len(lengths) > 1:
            raise SchemaError("columns have unequal lengths")

    @property
    def n(self) -> int:
        if not self.schema:
            return 0
        return self.columns[self.schema[0].name].shape[0]

    @property
    def target_name(self) -> str:
        for c in self.schema:
            if c.role is ColumnRole.TARGET:
                return c.name
        raise SchemaError("dataset has no target column")

    @property
    def target(self) -> np.ndarray:
        return self.columns[self.target_name]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"no column named '{name}'") from None

    def schema_column(self, name: str) -> Column:
        for c in self.schema:
            if c.name == name:
                return c
        raise SchemaError(f"no column named '{name}'")

    def feature_columns(self) -> list[Column]:
        return [c for c in self.schema if c.role is ColumnRole.FEATURE]

    def missing_mask(self, name: str) -> np.ndarray:
        col = self.schema_column(name)
        arr = self.columns[name]
        if is_coded(col.kind):
            return arr == MISSING_CODE
        return np.isnan(arr)

    def label_of(self, name: str, code: int) -> str:
        return self.categories[name][code]

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        cols = {name: arr[idx] for name, arr in self.columns.items()}
        return Dataset(self.schema, cols, self.categories, self.aux)

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema:
            return False
        if set(self.columns) != set(other.columns):
            return False
        for name, arr in self.columns.items():
            brr = other.columns[name]
            if arr.shape != brr.shape:
                return False
            if arr.dtype.kind == "f":
                if not np.array_equal(arr, brr, equal_nan=True):
                    return False
            elif not np.array_equal(arr, brr):
                return False
        coded = [c.name for c in self.schema if is_coded(c.kind)]
        return all(self.categories[n] == other.categories[n] for n in coded)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class FoldPlan:
    """k-fold assignment over a fixed index vector.

    ``assignments[i]`` is the fold of ``indices[i]``; folds are used as
    validation parts one at a time via :meth:`fold`.
    """

    k: int
    indices: np.ndarray
    assignments: np.ndarray

    def fold(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= i < self.k:
            raise DataError(f"fold {i} out of range for k={self.k}")
        mask = self.assignments == i
        return self.indices[~mask], self.indices[mask]


# ---------------------------------------------------------------------------
# schema config
# ---------------------------------------------------------------------------


def load_schema(config: dict) -> list[Column]:
    """Build a schema from a parsed config mapping.

    Expected shape: ``{"columns": [{"name", "kind", "role"}...], "drop": [...]}``
    where kinds are numeric/categorical/identifier/year/month/week/day and
    roles are feature/target/key/drop (role defaults to feature).  Names in
    the drop list get role drop regardless of their declared role.
    """
    if "columns" not in config:
        raise SchemaError("schema config needs a 'columns' list")
    drop = set(config.get("drop", []))
    schema = []
    for entry in config["columns"]:
        try:
            kind = ColumnKind(entry.get("kind", "numeric"))
            role = ColumnRole(entry.get("role", "feature"))
        except ValueError as exc:
            raise SchemaError(f"bad column entry {entry!r}: {exc}") from None
        if "name" not in entry:
            raise SchemaError(f"column entry without a name: {entry!r}")
        if entry["name"] in drop:
            role = ColumnRole.DROP
        schema.append(Column(entry["name"], kind, role))
    unknown = drop - {c.name for c in schema}
    if unknown:
        raise SchemaError(f"drop list names unknown columns: {sorted(unknown)}")
    return schema


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def ingest_csv(path, schema: Sequence[Column]) -> Dataset:
    """Read a comma-separated file with a header row into a Dataset.

    The header must contain exactly the schema's column names (any order).
    Cells are stripped; empty cells and the tokens na/nan/null/none (case
    insensitive) are missing.  Anything else unparseable under the declared
    kind raises :class:`ParseError` naming the line and column.  Columns
    with role drop are checked in the header but not retained.
    """
    keep = [c for c in schema if c.role is not ColumnRole.DROP]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: file is empty, expected a header row") from None
        header = [h.strip() for h in header]
        declared = {c.name for c in schema}
        missing = declared - set(header)
        extra = set(header) - declared
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"missing columns {sorted(missing)}")
            if extra:
                parts.append(f"unexpected columns {sorted(extra)}")
            raise SchemaError(f"{path}: header does not match schema: " + "; ".join(parts))
        position = {c.name: header.index(c.name) for c in keep}

        raw: dict[str, list] = {c.name: [] for c in keep}
        categories: dict[str, list[str]] = {c.name: [] for c in keep if is_coded(c.kind)}
        seen: dict[str, dict[str, int]] = {name: {} for name in categories}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"{path} line {lineno}: expected {len(header)} cells, found {len(row)}"
                )
            for col in keep:
                cell = row[position[col.name]].strip()
                if cell.lower() in _MISSING_TOKENS:
                    raw[col.name].append(math.nan if not is_coded(col.kind) else MISSING_CODE)
                    continue
                if is_coded(col.kind):
                    codes = seen[col.name]
                    code = codes.get(cell)
                    if code is None:
                        code = len(codes)
                        codes[cell] = code
                        categories[col.name].append(cell)
                    raw[col.name].append(code)
                else:
                    try:
                        raw[col.name].append(float(cell))
                    except ValueError:
                        raise ParseError(
                            f"{path} line {lineno}, column '{col.name}': "
                            f"cannot parse {cell!r} as a number"
                        ) from None

    columns = {}
    for col in keep:
        dtype = np.int64 if is_coded(col.kind) else np.float64
        columns[col.name] = np.asarray(raw[col.name], dtype=dtype)
    return Dataset(keep, columns, categories)


# ---------------------------------------------------------------------------
# missing values, sparsity, outliers
# ---------------------------------------------------------------------------


def fill_missing(d: Dataset, numeric: str = "mean", categorical: str = "mode",
                 sentinel: str = "missing") -> Dataset:
    """Resolve missing cells column by column.

    Numeric strategy: mean or median of the column's non-missing values.
    Categorical strategy: mode (ties keep the first-seen category) or a
    sentinel category appended to the label list.  A column with every cell
    missing cannot be filled; drop it with :func:`drop_sparse` first.
    """
    if numeric not in ("mean", "median"):
        raise DataError(f"unknown numeric fill strategy '{numeric}'")
    if categorical not in ("mode", "sentinel"):
        raise DataError(f"unknown categorical fill strategy '{categorical}'")
    columns = dict(d.columns)
    categories = dict(d.categories)
    for col in d.schema:
        arr = columns[col.name]
        mask = d.missing_mask(col.name)
        if not mask.any():
            continue
        if mask.all():
            raise DataError(
                f"column '{col.name}' is entirely missing; use drop_sparse before filling"
            )
        if is_coded(col.kind):
            if categorical == "mode":
                counts = np.bincount(arr[~mask], minlength=len(categories[col.name]))
                fill = int(np.argmax(counts))
            else:
                labels = list(categories[col.name])
                if sentinel not in labels:
                    labels.append(sentinel)
                    categories[col.name] = labels
                fill = labels.index(sentinel)
            out = arr.copy()
            out[mask] = fill
        else:
            stat = np.mean if numeric == "mean" else np.median
            fill = float(stat(arr[~mask]))
            out = arr.copy()
            out[mask] = fill
        columns[col.name] = out
    return Dataset(d.schema, columns, categories, d.aux)


def drop_sparse(d: Dataset, threshold: float = 0.5) -> Dataset:
    """Remove columns whose missing fraction strictly exceeds threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"sparsity threshold must lie in [0, 1], got {threshold}")
    doomed = []
    for col in d.schema:
        if d.n == 0:
            continue
        frac = d.missing_mask(col.name).mean()
        if frac > threshold:
            if col.role is ColumnRole.TARGET:
                raise DataError(
                    f"target column '{col.name}' exceeds the sparsity threshold "
                    f"({frac:.3f} > {threshold}) and cannot be dropped"
                )
            doomed.append(col.name)
    if not doomed:
        return d
    schema = [c for c in d.schema if c.name not in doomed]
    columns = {name: arr for name, arr in d.columns.items() if name not in doomed}
    categories = {name: cats for name, cats in d.categories.items() if name not in doomed}
    return Dataset(schema, columns, categories, d.aux)


def remove_outliers(d: Dataset, max_demand: float = 20.0) -> Dataset:
    """Keep rows whose target is strictly below max_demand."""
    keep = d.target < max_demand
    if not keep.any():
        raise DataError(f"no rows left with target below {max_demand}")
    return d.take(np.flatnonzero(keep))


# ---------------------------------------------------------------------------
# aggregation and popularity
# ---------------------------------------------------------------------------


def _single_column_of_kind(d: Dataset, kind: ColumnKind, what: str) -> str:
    names = [c.name for c in d.schema if c.kind is kind]
    if len(names) != 1:
        raise SchemaError(
            f"need exactly one {what} column to aggregate weekly, found {names or 'none'}"
        )
    return names[0]


def aggregate_weekly(d: Dataset, product_key: str | None = None,
                     year_key: str | None = None, week_key: str | None = None,
                     demand_name: str = "demand", quantity: str | None = None) -> Dataset:
    """Collapse sale-level rows to one row per (product, year, week).

    The new demand column counts the group's rows, or sums the named
    quantity column when given, and becomes the target.  Carried numeric
    columns take the group mean; carried categorical columns take the group
    mode with ties broken by first occurrence in the group's row order.
    Group rows appear in order of each group's first occurrence.
    """
    product_key = product_key or _single_column_of_kind(d, ColumnKind.IDENTIFIER, "product identifier")
    year_key = year_key or _single_column_of_kind(d, ColumnKind.YEAR, "year")
    week_key = week_key or _single_column_of_kind(d, ColumnKind.WEEK, "week")
    for key in (product_key, year_key, week_key):
        d.schema_column(key)
        if d.missing_mask(key).any():
            raise DataError(f"grouping column '{key}' has missing values; fill them first")
    if quantity is not None:
        qcol = d.schema_column(quantity)
        if is_coded(qcol.kind):
            raise DataError(f"quantity column '{quantity}' must be numeric")
    if any(c.name == demand_name for c in d.schema):
        raise SchemaError(f"demand column name '{demand_name}' already exists")

    key_names = {product_key, year_key, week_key}
    carried = [c for c in d.schema if c.name not in key_names and c.name != quantity
               and c.role is not ColumnRole.TARGET]

    groups: dict[tuple, int] = {}
    members: list[list[int]] = []
    prod = d.columns[product_key]
    year = d.columns[year_key]
    week = d.columns[week_key]
    for i in range(d.n):
        key = (int(prod[i]), float(year[i]), float(week[i]))
        slot = groups.get(key)
        if slot is None:
            slot = len(members)
            groups[key] = slot
            members.append([])
        members[slot].append(i)

    n_groups = len(members)
    out_cols: dict[str, np.ndarray] = {
        product_key: np.empty(n_groups, dtype=np.int64),
        year_key: np.empty(n_groups),
        week_key: np.empty(n_groups),
        demand_name: np.empty(n_groups),
    }
    for col in carried:
        out_cols[col.name] = np.empty(n_groups, dtype=np.int64 if is_coded(col.kind) else np.float64)

    qty = d.columns[quantity] if quantity is not None else None
    for slot, ((pcode, yval, wval), rows) in enumerate(zip(groups, members)):
        out_cols[product_key][slot] = pcode
        out_cols[year_key][slot] = yval
        out_cols[week_key][slot] = wval
        out_cols[demand_name][slot] = float(qty[rows].sum()) if qty is not None else len(rows)
        for col in carried:
            arr = d.columns[col.name]
            if is_coded(col.kind):
                # dict preserves first-occurrence order, so max() on counts
                # breaks ties toward the earliest value in the group
                counts: dict[int, int] = {}
                for i in rows:
                    code = int(arr[i])
                    counts[code] = counts.get(code, 0) + 1
                out_cols[col.name][slot] = max(counts, key=counts.get)
            else:
                out_cols[col.name][slot] = float(arr[rows].mean())

    prod_col = d.schema_column(product_key)
    schema = [
        Column(product_key, prod_col.kind, prod_col.role),
        Column(year_key, ColumnKind.YEAR, d.schema_column(year_key).role),
        Column(week_key, ColumnKind.WEEK, d.schema_column(week_key).role),
    ]
    schema.extend(Column(c.name, c.kind, c.role) for c in carried)
    schema.append(Column(demand_name, ColumnKind.NUMERIC, ColumnRole.TARGET))
    categories = {name: cats for name, cats in d.categories.items() if name in out_cols}
    return Dataset(schema, out_cols, categories)


def derive_popularity(d: Dataset, views, product_key: str | None = None,
                      name: str = "popularity") -> Dataset:
    """Attach a per-product popularity count from view-event tables.

    ``views`` is one Dataset or a sequence of them; each needs a column
    named like the product key.  Popularity of a product is its total row
    count across all tables, matched by label so the tables may intern
    categories independently.  Products never viewed get 0.
    """
    product_key = product_key or _single_column_of_kind(d, ColumnKind.IDENTIFIER, "product identifier")
    if any(c.name == name for c in d.schema):
        raise SchemaError(f"column '{name}' already exists")
    tables = [views] if isinstance(views, Dataset) else list(views)
    counts: dict[str, int] = {}
    for t in tables:
        col = t.schema_column(product_key)
        if not is_coded(col.kind):
            raise SchemaError(f"view table column '{product_key}' must be coded")
        codes = t.columns[product_key]
        labels = t.categories[product_key]
        for code, cnt in zip(*np.unique(codes[codes != MISSING_CODE], return_counts=True)):
            label = labels[int(code)]
            counts[label] = counts.get(label, 0) + int(cnt)

    labels_here = d.categories[product_key]
    per_code = np.array([float(counts.get(lab, 0)) for lab in labels_here])
    codes_here = d.columns[product_key]
    pop = np.zeros(d.n)
    ok = codes_here != MISSING_CODE
    pop[ok] = per_code[codes_here[ok]]

    schema = list(d.schema) + [Column(name, ColumnKind.NUMERIC, ColumnRole.FEATURE)]
    columns = dict(d.columns)
    columns[name] = pop
    return Dataset(schema, columns, d.categories, d.aux)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def split(d: Dataset, fractions: Sequence[float] = (0.5, 0.2, 0.3), seed: int = 0) -> SplitIndices:
    """Shuffle rows and partition into train/validation/test index arrays."""
    if len(fractions) != 3:
        raise DataError("need exactly three split fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {sum(fractions)}")
    if any(f < 0 for f in fractions):
        raise DataError("split fractions must be non-negative")
    if d.n < 10:
        raise DataError(f"need at least 10 rows to split, got {d.n}")
    perm = np.random.default_rng(seed).permutation(d.n)
    n_train = int(round(fractions[0] * d.n))
    n_val = int(round(fractions[1] * d.n))
    n_val = min(n_val, d.n - n_train)
    return SplitIndices(
        train=perm[:n_train],
        validation=perm[n_train:n_train + n_val],
        test=perm[n_train + n_val:],
    )


def subsample_subsets(indices, count: int = 20, fraction: float = 0.8,
                      seed: int = 0) -> list[np.ndarray]:
    """Draw ``count`` random proper subsets, each of floor(n * fraction) rows.

    Subsets are drawn without replacement and returned sorted; the size is
    capped at n - 1 so every subset is strictly smaller than the input.
    """
    idx = np.asarray(indices)
    if count < 2:
        raise DataError(f"need at least 2 subsets, got {count}")
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"subset fraction must lie in (0, 1], got {fraction}")
    size = min(int(math.floor(idx.size * fraction)), idx.size - 1)
    if size < 1:
        raise DataError(f"cannot draw proper subsets of {idx.size} rows")
    rng = np.random.default_rng(seed)
    return [np.sort(rng.choice(idx, size=size, replace=False)) for _ in range(count)]


def kfold(indices, k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle indices and deal them into k folds with sizes differing by at most 1."""
    idx = np.asarray(indices)
    if k < 2:
        raise DataError(f"need k >= 2 folds, got {k}")
    if idx.size < k:
        raise DataError(f"cannot make {k} folds from {idx.size} rows")
    perm = np.random.default_rng(seed).permutation(idx)
    assignments = np.empty(idx.size, dtype=np.int64)
    base, extra = divmod(idx.size, k)
    start = 0
    for f in range(k):
        stop = start + base + (1 if f < extra else 0)
        assignments[start:stop] = f
        start = stop
    return FoldPlan(k=k, indices=perm, assignments=assignments)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruth:
    """Coefficients mapping features to expected weekly demand."""

    intercept: float = 6.0
    price: float = -0.12
    stock: float = 0.01
    popularity: float = 0.02
    seller_rating: float = 0.6
    week: float = 0.03
    price_popularity: float = 0.0
    brand_effects: tuple[float, ...] = (0.0, 1.2, -0.8)


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the seeded weekly demand generator.

    When ``quantize`` is set demand is max(0, round(mu + noise)); disabling
    it keeps the raw real value, which exact-recovery tests rely on.  The
    expected demand mu is retained in ``aux['expected']``.
    """

    n_products: int = 50
    weeks: int = 40
    noise_std: float = 1.0
    seed: int = 0
    quantize: bool = True
    truth: GroundTruth = field(default_factory=GroundTruth)


def _synthetic_frames(spec: SyntheticSpec):
    if spec.n_products < 1:
        raise DataError(f"n_products must be positive, got {spec.n_products}")
    if spec.weeks < 1:
        raise DataError(f"weeks must be positive, got {spec.weeks}")
    if spec.noise_std < 0:
        raise DataError(f"noise_std must be non-negative, got {spec.noise_std}")
    rng = np.random.default_rng(spec.seed)
    t = spec.truth
    n_brands = len(t.brand_effects)

    base_price = rng.uniform(10.0, 50.0, spec.n_products)
    popularity = rng.integers(0, 301, spec.n_products).astype(np.float64)
    rating = np.round(rng.uniform(1.0, 5.0, spec.n_products), 1)
    brand = rng.integers(0, n_brands, spec.n_products)

    rows = spec.n_products * spec.weeks
    prod = np.repeat(np.arange(spec.n_products), spec.weeks)
    week_index = np.tile(np.arange(spec.weeks), spec.n_products)
    year = 2015.0 + week_index // 52
    week = (week_index % 52 + 1).astype(np.float64)
    price = np.round(base_price[prod] + rng.normal(0.0, 2.0, rows), 2)
    stock = rng.integers(0, 201, rows).astype(np.float64)

    mu = (t.intercept
          + t.price * price
          + t.stock * stock
          + t.popularity * popularity[prod]
          + t.seller_rating * rating[prod]
          + t.week * week
          + t.price_popularity * price * popularity[prod]
          + np.asarray(t.brand_effects)[brand[prod]])
    noise = rng.normal(0.0, spec.noise_std, rows) if spec.noise_std > 0 else np.zeros(rows)
    demand = mu + noise
    if spec.quantize:
        demand = np.maximum(0.0, np.round(demand))
    return prod, year, week, price, stock, popularity, rating, brand, mu, demand


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Generate one weekly row per (product, week) with a demand target."""
    prod, year, week, price, stock, popularity, rating, brand, mu, demand = _synthetic_frames(spec)
    n_brands = len(spec.truth.brand_effects)
    schema = [
        Column("product_id", ColumnKind.IDENTIFIER, ColumnRole.KEY),
        Column("year", ColumnKind.YEAR, ColumnRole.KEY),
        Column("week", ColumnKind.WEEK, ColumnRole.FEATURE),
        Column("price", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("stock", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("popularity", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("seller_rating", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("brand", ColumnKind.CATEGORICAL, ColumnRole.FEATURE),
        Column("demand", ColumnKind.NUMERIC, ColumnRole.TARGET),
    ]
    columns = {
        "product_id": prod.astype(np.int64),
        "year": year,
        "week": week,
        "price": price,
        "stock": stock,
        "popularity": popularity[prod],
        "seller_rating": rating[prod],
        "brand": brand[prod].astype(np.int64),
        "demand": demand,
    }
    categories = {
        "product_id": [f"P{i:04d}" for i in range(spec.n_products)],
        "brand": [f"brand_{chr(ord('a') + b)}" for b in range(n_brands)],
    }
    aux = {"expected": mu, "truth": spec.truth, "spec": spec}
    return Dataset(schema, columns, categories, aux)


def generate_synthetic_sales(spec: SyntheticSpec, missing_rate: float = 0.0):
    """Expand the weekly generator into sale-level events plus view tables.

    Returns (sales, purchase_views, abandoned_views): one sales row per unit
    of weekly demand, and two view-event tables whose combined per-product
    row counts equal the popularity feature, so the preprocess pipeline can
    rebuild the weekly dataset.  ``missing_rate`` blanks that fraction of
    stock and seller_rating cells to exercise the missing-value handling.
    """
    if not 0.0 <= missing_rate < 1.0:
        raise DataError(f"missing_rate must lie in [0, 1), got {missing_rate}")
    prod, year, week, price, stock, popularity, rating, brand, _, demand = _synthetic_frames(spec)
    counts = demand.astype(np.int64)
    reps = np.repeat(np.arange(prod.size), counts)
    n_sales = reps.size

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 9001]))
    s_stock = stock[reps].copy()
    s_rating = rating[prod][reps].copy()
    if missing_rate > 0 and n_sales:
        s_stock[rng.random(n_sales) < missing_rate] = math.nan
        s_rating[rng.random(n_sales) < missing_rate] = math.nan

    n_brands = len(spec.truth.brand_effects)
    product_labels = [f"P{i:04d}" for i in range(spec.n_products)]
    brand_labels = [f"brand_{chr(ord('a') + b)}" for b in range(n_brands)]
    sales_schema = [
        Column("product_id", ColumnKind.IDENTIFIER, ColumnRole.KEY),
        Column("year", ColumnKind.YEAR, ColumnRole.KEY),
        Column("week", ColumnKind.WEEK, ColumnRole.FEATURE),
        Column("price", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("stock", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("seller_rating", ColumnKind.NUMERIC, ColumnRole.FEATURE),
        Column("brand", ColumnKind.CATEGORICAL, ColumnRole.FEATURE),
    ]
    sales = Dataset(
        sales_schema,
        {
            "product_id": prod[reps].astype(np.int64),
            "year": year[reps],
            "week": week[reps],
            "price": price[reps],
            "stock": s_stock,
            "seller_rating": s_rating,
            "brand": brand[prod][reps].astype(np.int64),
        },
        {"product_id": product_labels, "brand": brand_labels},
    )

    pop_counts = popularity.astype(np.int64)
    purchased = np.minimum(pop_counts, pop_counts // 3)
    abandoned = pop_counts - purchased
    view_schema = [Column("product_id", ColumnKind.IDENTIFIER, ColumnRole.KEY)]

    def view_table(per_product: np.ndarray) -> Dataset:
        codes = np.repeat(np.arange(spec.n_products), per_product)
        return Dataset(view_schema, {"product_id": codes.astype(np.int64)},
                       {"product_id": product_labels})

    return sales, view_table(purchased), view_table(abandoned)


def write_csv(d: Dataset, path) -> None:
    """Write a Dataset back to comma-separated text with a header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in d.schema])
        cols = []
        for c in d.schema:
            arr = d.columns[c.name]
            if is_coded(c.kind):
                labels = d.categories[c.name]
                cols.append([labels[v] if v != MISSING_CODE else "" for v in arr])
            else:
                cols.append(["" if math.isnan(v) else repr(float(v)) for v in arr])
        for i in range(d.n):
            writer.writerow([col[i] for col in cols])
