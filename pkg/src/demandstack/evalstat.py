"""Evaluation metrics, significance tests, and the repeated-subset protocol.

The F and t distribution tails are computed from scratch through the
regularized incomplete beta function, evaluated by a modified Lentz
continued fraction to an internal tolerance of 1e-10, so the package needs
no statistics dependency.

The protocol draws ``repetitions`` random proper subsets of the training
pool.  On each repetition every stacked entry trains its first level on
the subset and its combiner on the fixed validation split, every single
entry trains on subset plus validation, and all entries score RMSE on the
fixed test split.  The resulting matrix (one row per repetition, one
column per entry) feeds a one-way ANOVA across entries and pairwise
t-tests.  First-level learners shared by several stacked entries are
trained once per repetition and reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Dataset, SplitIndices, kfold, subsample_subsets
from .errors import DataError, DegenerateVarianceError, ProtocolError
from .seeding import derive_seed

_BETACF_TOL = 1e-10
_BETACF_MAX_ITER = 500
_TINY = 1e-300


def rmse(predicted, actual) -> float:
    """Root mean squared error between two equal-length vectors."""
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise DataError(f"rmse needs equal-length vectors, got shapes {p.shape} and {a.shape}")
    if p.size == 0:
        raise DataError("rmse of empty vectors is undefined")
    if not (np.isfinite(p).all() and np.isfinite(a).all()):
        raise DataError("rmse inputs contain non-finite values")
    err = p - a
    return float(np.sqrt((err @ err) / p.size))


# ---------------------------------------------------------------------------
# incomplete beta and derived distribution functions
# ---------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_TOL:
            return h
    raise DataError(f"incomplete beta failed to converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise DataError(f"beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DataError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (a * math.log(x) + b * math.log1p(-x)
                - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, df1: float, df2: float) -> float:
    """CDF of the F distribution with df1 and df2 degrees of freedom."""
    if df1 <= 0 or df2 <= 0:
        raise DataError(f"degrees of freedom must be positive, got {df1}, {df2}")
    if x <= 0.0:
        return 0.0
    return betainc_reg(df1 / 2.0, df2 / 2.0, df1 * x / (df1 * x + df2))


def f_sf(x: float, df1: float, df2: float) -> float:
    """Upper tail P(F > x), computed directly for accuracy near zero."""
    if df1 <= 0 or df2 <= 0:
        raise DataError(f"degrees of freedom must be positive, got {df1}, {df2}")
    if x <= 0.0:
        return 1.0
    return betainc_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * x))


def t_cdf(x: float, df: float) -> float:
    """CDF of Student's t distribution with df degrees of freedom."""
    if df <= 0:
        raise DataError(f"degrees of freedom must be positive, got {df}")
    if x == 0.0:
        return 0.5
    tail = 0.5 * betainc_reg(df / 2.0, 0.5, df / (df + x * x))
    return 1.0 - tail if x > 0 else tail


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided p-value P(|T| >= |t|)."""
    if df <= 0:
        raise DataError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------------------------
# ANOVA and t-test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    df_between: int
    df_within: int
    ms_between: float
    ms_within: float
    p_value: float
    alpha: float
    reject: bool


def anova(groups, alpha: float = 0.05) -> AnovaResult:
    """One-way analysis of variance across two or more groups."""
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2:
        raise DataError(f"ANOVA needs at least 2 groups, got {len(arrays)}")
    for i, g in enumerate(arrays):
        if g.ndim != 1 or g.size == 0:
            raise DataError(f"ANOVA group {i} must be a non-empty vector")
        if not np.isfinite(g).all():
            raise DataError(f"ANOVA group {i} contains non-finite values")
    k = len(arrays)
    n_total = sum(g.size for g in arrays)
    if n_total - k < 1:
        raise DataError("ANOVA needs at least one more observation than groups")
    grand = sum(float(g.sum()) for g in arrays) / n_total
    ss_between = sum(g.size * (float(g.mean()) - grand) ** 2 for g in arrays)
    ss_within = sum(float(((g - g.mean()) ** 2).sum()) for g in arrays)
    ms_between = ss_between / (k - 1)
    ms_within = ss_within / (n_total - k)
    if ms_within == 0.0:
        raise DegenerateVarianceError("all groups have zero within-group variance")
    f = ms_between / ms_within
    p = f_sf(f, k - 1, n_total - k)
    return AnovaResult(f, k - 1, n_total - k, ms_between, ms_within, p, alpha, p < alpha)


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    df: float
    p_value: float
    alpha: float
    reject: bool
    paired: bool


def t_test(a, b, alpha: float = 0.05, paired: bool = False) -> TTestResult:
    """Two-sample t-test: Welch's by default, paired on request."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise DataError("t-test inputs must be vectors")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("t-test inputs contain non-finite values")
    if paired:
        if x.size != y.size:
            raise DataError(f"paired t-test needs equal lengths, got {x.size} and {y.size}")
        if x.size < 2:
            raise DataError(f"paired t-test needs at least 2 pairs, got {x.size}")
        diff = x - y
        sd = float(diff.std(ddof=1))
        mean = float(diff.mean())
        df = float(x.size - 1)
        if sd == 0.0:
            if mean == 0.0:
                raise DegenerateVarianceError("paired differences are identical")
            t = math.copysign(math.inf, mean)
        else:
            t = mean / (sd / math.sqrt(x.size))
    else:
        if x.size < 2 or y.size < 2:
            raise DataError("Welch's t-test needs at least 2 observations per sample")
        va = float(x.var(ddof=1))
        vb = float(y.var(ddof=1))
        se2 = va / x.size + vb / y.size
        delta = float(x.mean()) - float(y.mean())
        if se2 == 0.0:
            if delta == 0.0:
                raise DegenerateVarianceError("both samples are constant with equal means")
            t = math.copysign(math.inf, delta)
            df = float(x.size + y.size - 2)
        else:
            t = delta / math.sqrt(se2)
            df = se2 * se2 / (
                (va / x.size) ** 2 / (x.size - 1) + (vb / y.size) ** 2 / (y.size - 1)
            )
    p = t_sf_two_sided(t, df)
    return TTestResult(t, df, p, alpha, p < alpha, paired)


# ---------------------------------------------------------------------------
# repeated-subset evaluation protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleEntry:
    """One learner trained on subset + validation each repetition."""

    name: str
    spec: object


@dataclass(frozen=True)
class StackEntry:
    """A stacked combination: first-level specs plus the combiner spec."""

    name: str
    first: tuple
    second: object


@dataclass
class RunMatrix:
    names: list[str]
    values: np.ndarray

    def validate(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise DataError(f"run matrix shape {self.values.shape} does not fit {len(self.names)} names")
        if not np.isfinite(self.values).all():
            raise DataError("run matrix contains non-finite cells")
        if (self.values < 0).any():
            raise DataError("run matrix contains negative RMSE cells")

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise DataError(f"no protocol entry named '{name}'") from None
        return self.values[:, j]


@dataclass
class ProtocolResult:
    matrix: RunMatrix
    subsets: list
    entries: list


def run_protocol(d: Dataset, split_idx: SplitIndices, entries, repetitions: int = 20,
                 subset_fraction: float = 0.8, cv_k: int = 10, seed: int = 0) -> ProtocolResult:
    """Score every entry over repeated random subsets of the training pool."""
    from .stacking import assemble_stacked, canonical_order, train_first_level

    entries = list(entries)
    if not entries:
        raise DataError("protocol needs at least one entry")
    if repetitions < 2:
        raise DataError(f"protocol needs at least 2 repetitions, got {repetitions}")
    if split_idx.test.size == 0:
        raise DataError("test split is empty")
    names = [e.name for e in entries]
    if len(set(names)) != len(names):
        raise DataError("protocol entry names must be unique")

    stack_entries = [e for e in entries if isinstance(e, StackEntry)]
    if stack_entries and split_idx.validation.size == 0:
        raise DataError("validation split is empty but stacked entries are present")

    pool: list = []
    for e in stack_entries:
        for spec in e.first:
            if spec not in pool:
                pool.append(spec)
    needs_cv = any(spec.grid for spec in pool)

    subsets = subsample_subsets(split_idx.train, count=repetitions,
                                fraction=subset_fraction,
                                seed=derive_seed(seed, "subsets"))
    test_idx = split_idx.test
    y_test = d.target[test_idx]

    values = np.empty((repetitions, len(entries)))
    for r, subset in enumerate(subsets):
        folds = kfold(subset, k=cv_k, seed=derive_seed(seed, f"folds:{r}")) if needs_cv else None
        trained_pool: dict = {}
        if pool:
            fitted = train_first_level(d, pool, subset, folds)
            trained_pool = dict(zip(pool, fitted))
        union_idx = np.concatenate([subset, split_idx.validation])
        for j, entry in enumerate(entries):
            try:
                if isinstance(entry, StackEntry):
                    specs = list(entry.first)
                    ordered = [specs[i] for i in canonical_order(specs)]
                    models = [trained_pool[s] for s in ordered]
                    stacked = assemble_stacked(models, entry.second, d, split_idx.validation)
                    pred = stacked.predict(d, test_idx)
                else:
                    # single entries train plainly on subset + validation;
                    # any grid on the spec is ignored here
                    spec = replace(entry.spec, grid=None) if entry.spec.grid else entry.spec
                    single = train_first_level(d, [spec], union_idx, folds=None)[0]
                    pred = single.predict(d, test_idx)
                values[r, j] = rmse(pred, y_test)
            except Exception as exc:
                raise ProtocolError(
                    f"entry '{entry.name}' failed on repetition {r}: {exc}"
                ) from exc

    matrix = RunMatrix(names, values)
    matrix.validate()
    return ProtocolResult(matrix, subsets, entries)
