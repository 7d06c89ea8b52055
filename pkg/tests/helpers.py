"""Shared fixtures and independent oracles used across the test modules.

The oracles here deliberately avoid the library's own code paths: the split
oracle enumerates candidates directly, the elastic-net oracle is proximal
gradient descent, and the density functions feed scipy quadrature.  Keeping
them independent means agreement with the package is evidence, not tautology.
"""

from __future__ import annotations

import math

import numpy as np

from demandstack import Column, ColumnKind, ColumnRole, Dataset


def build_dataset(numeric=None, categorical=None, target=None, target_name="y"):
    """Assemble a Dataset from plain python lists.

    numeric: dict name -> list of floats (NaN allowed).
    categorical: dict name -> list of string labels ("" means missing).
    target: list of floats for the target column.
    """
    numeric = numeric or {}
    categorical = categorical or {}
    schema: list[Column] = []
    columns: dict[str, np.ndarray] = {}
    categories: dict[str, list[str]] = {}
    for name, vals in numeric.items():
        schema.append(Column(name, ColumnKind.NUMERIC, ColumnRole.FEATURE))
        columns[name] = np.asarray(vals, dtype=np.float64)
    for name, labels in categorical.items():
        schema.append(Column(name, ColumnKind.CATEGORICAL, ColumnRole.FEATURE))
        seen: list[str] = []
        codes = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            if lab == "":
                codes[i] = -1
                continue
            if lab not in seen:
                seen.append(lab)
            codes[i] = seen.index(lab)
        columns[name] = codes
        categories[name] = seen
    if target is not None:
        schema.append(Column(target_name, ColumnKind.NUMERIC, ColumnRole.TARGET))
        columns[target_name] = np.asarray(target, dtype=np.float64)
    return Dataset(schema, columns, categories)


def target_name_of(d: Dataset) -> str:
    for col in d.schema:
        if col.role is ColumnRole.TARGET:
            return col.name
    raise AssertionError("dataset has no target")


# ---------------------------------------------------------------------------
# brute-force split oracle
# ---------------------------------------------------------------------------


def _pop_var(y: np.ndarray) -> float:
    return float(np.mean((y - y.mean()) ** 2)) if y.size else 0.0


def brute_split_candidates(d: Dataset, indices, min_leaf: int = 1):
    """Exhaustively score every legal split of every feature.

    Returns a list of (feature_name, threshold_or_None, reduction) tuples in
    schema order with numeric thresholds ascending.  Empty when no legal
    split exists.
    """
    idx = np.asarray(indices)
    y = d.column(target_name_of(d))[idx]
    total = _pop_var(y)
    out = []
    for col in d.feature_columns():
        arr = d.column(col.name)[idx]
        if col.kind in (ColumnKind.CATEGORICAL, ColumnKind.IDENTIFIER):
            codes = np.unique(arr)
            if codes.size < 2:
                continue
            if any(np.sum(arr == c) < min_leaf for c in codes):
                continue
            within = 0.0
            for c in codes:
                mask = arr == c
                within += (np.sum(mask) / y.size) * _pop_var(y[mask])
            out.append((col.name, None, max(total - within, 0.0)))
        else:
            xs = np.sort(np.unique(arr))
            for a, b in zip(xs[:-1], xs[1:]):
                t = 0.5 * (a + b)
                mask = arr <= t
                nl = int(np.sum(mask))
                nr = y.size - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                within = (nl * _pop_var(y[mask]) + nr * _pop_var(y[~mask])) / y.size
                out.append((col.name, float(t), max(total - within, 0.0)))
    return out


def brute_best_split(d: Dataset, indices, min_leaf: int = 1):
    """First maximal candidate from :func:`brute_split_candidates`, or None.

    Candidates are generated in schema order with thresholds ascending and
    only a strictly larger reduction replaces the incumbent, mirroring the
    library's documented tie-breaks.
    """
    best = None
    for cand in brute_split_candidates(d, indices, min_leaf):
        if best is None or cand[2] > best[2]:
            best = cand
    return best


def brute_argmax_set(d: Dataset, indices, min_leaf: int = 1, rel_tol: float = 1e-9):
    """All candidates whose reduction sits within rel_tol of the maximum.

    Distinct features can tie exactly (two splits isolating the same row
    partition), in which case differently-ordered arithmetic may rank them
    either way; comparisons against the implementation therefore accept any
    member of this set.
    """
    cands = brute_split_candidates(d, indices, min_leaf)
    if not cands:
        return None, []
    top = max(c[2] for c in cands)
    eps = rel_tol * max(1.0, top)
    return top, [c for c in cands if c[2] >= top - eps]


# ---------------------------------------------------------------------------
# proximal-gradient elastic net oracle
# ---------------------------------------------------------------------------


def ista_elastic_net(X, y, lam, l1_ratio, iters=20000):
    """Proximal gradient (ISTA) minimizer of the raw-space objective.

    (1/n)||y - X b - b0||^2 + lam*(l1_ratio*||b||_1 + (1-l1_ratio)*||b||_2^2)

    Independent of the coordinate-descent implementation under test.
    Returns (beta, intercept).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    l1 = lam * l1_ratio
    l2 = lam * (1.0 - l1_ratio)
    # Lipschitz constant of the smooth part's gradient
    lip = 2.0 * np.linalg.eigvalsh(X.T @ X / n)[-1] + 2.0 * l2
    step = 1.0 / max(lip, 1e-12)
    beta = np.zeros(p)
    for _ in range(iters):
        b0 = float(np.mean(y - X @ beta))
        resid = X @ beta + b0 - y
        grad = 2.0 * (X.T @ resid) / n + 2.0 * l2 * beta
        zeta = beta - step * grad
        beta = np.sign(zeta) * np.maximum(np.abs(zeta) - step * l1, 0.0)
    b0 = float(np.mean(y - X @ beta))
    return beta, b0


def raw_objective(X, y, beta, b0, lam, l1_ratio):
    resid = y - X @ beta - b0
    pen = lam * (l1_ratio * np.sum(np.abs(beta)) + (1.0 - l1_ratio) * np.sum(beta**2))
    return float(resid @ resid / len(y) + pen)


# ---------------------------------------------------------------------------
# densities for quadrature cross-checks
# ---------------------------------------------------------------------------


def f_density(x: float, d1: int, d2: int) -> float:
    if x <= 0.0:
        return 0.0
    lg = (
        math.lgamma((d1 + d2) / 2.0)
        - math.lgamma(d1 / 2.0)
        - math.lgamma(d2 / 2.0)
    )
    logpdf = (
        lg
        + (d1 / 2.0) * math.log(d1 / d2)
        + (d1 / 2.0 - 1.0) * math.log(x)
        - ((d1 + d2) / 2.0) * math.log1p(d1 * x / d2)
    )
    return math.exp(logpdf)


def t_density(x: float, df: int) -> float:
    lg = math.lgamma((df + 1.0) / 2.0) - math.lgamma(df / 2.0)
    logpdf = lg - 0.5 * math.log(df * math.pi) - ((df + 1.0) / 2.0) * math.log1p(x * x / df)
    return math.exp(logpdf)
