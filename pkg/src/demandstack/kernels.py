"""Hot numeric kernels with two interchangeable engines.

The tree splitter and the elastic-net coordinate descent spend nearly all
their time in three inner loops.  Each loop exists twice:

* a plain-loop version compiled with ``numba.njit`` (used by default), and
* a vectorized numpy version used when numba is unavailable or when the
  environment variable ``DEMANDSTACK_DISABLE_NUMBA`` is set to ``1``.

Both engines implement the same math and agree to float tolerance; the
benchmark in ``benchmarks/bench_kernels.py`` times them side by side.
"""

from __future__ import annotations

import math
import os

import numpy as np

DISABLE_ENV = "DEMANDSTACK_DISABLE_NUMBA"


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _numba_available()
_disabled = os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and not _disabled


# ---------------------------------------------------------------------------
# numeric split scan
#
# Given a numeric feature x and targets y at one tree node, find the
# threshold t (midpoint of adjacent distinct sorted values) maximizing the
# variance reduction of the binary split (x <= t) / (x > t), subject to both
# sides holding at least min_leaf rows.  Ties keep the smallest threshold.
# When the two values are adjacent floats the midpoint can round onto the
# right one, which would empty that side; such a threshold is pinned to the
# left value, keeping the partition the scan actually scored.  Targets are
# centered first so the prefix-sum variance formula does not cancel
# catastrophically.  Returns (best_vr, best_threshold); best_vr < 0 means
# no legal boundary exists.
# ---------------------------------------------------------------------------


def _numeric_split_scan_loop(x, y, min_leaf):
    n = x.shape[0]
    order = np.argsort(x)
    xs = x[order]
    mu = 0.0
    for i in range(n):
        mu += y[i]
    mu /= n
    c = np.empty(n)
    for i in range(n):
        c[i] = y[order[i]] - mu
    total_sum = 0.0
    total_sq = 0.0
    for i in range(n):
        total_sum += c[i]
        total_sq += c[i] * c[i]
    node_var = total_sq / n - (total_sum / n) ** 2
    best_vr = -1.0
    best_t = math.nan
    s = 0.0
    s2 = 0.0
    for i in range(n - 1):
        ci = c[i]
        s += ci
        s2 += ci * ci
        if xs[i + 1] == xs[i]:
            continue
        nl = i + 1
        nr = n - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        sr = total_sum - s
        sr2 = total_sq - s2
        within = (s2 - s * s / nl + sr2 - sr * sr / nr) / n
        vr = node_var - within
        if vr < 0.0:
            vr = 0.0
        if vr > best_vr:
            best_vr = vr
            t = 0.5 * (xs[i] + xs[i + 1])
            if t >= xs[i + 1]:
                t = xs[i]
            best_t = t
    return best_vr, best_t


def _numeric_split_scan_np(x, y, min_leaf):
    n = x.shape[0]
    order = np.argsort(x)
    xs = x[order]
    c = y[order] - y.mean()
    cs = np.cumsum(c)
    cs2 = np.cumsum(c * c)
    total_sum = cs[-1]
    total_sq = cs2[-1]
    node_var = total_sq / n - (total_sum / n) ** 2
    nl = np.arange(1, n)
    nr = n - nl
    legal = (xs[1:] != xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not legal.any():
        return -1.0, math.nan
    s = cs[:-1][legal]
    s2 = cs2[:-1][legal]
    nl = nl[legal].astype(np.float64)
    nr = nr[legal].astype(np.float64)
    within = (s2 - s * s / nl + (total_sq - s2) - (total_sum - s) ** 2 / nr) / n
    vr = np.maximum(node_var - within, 0.0)
    k = int(np.argmax(vr))
    lo = float(xs[:-1][legal][k])
    hi = float(xs[1:][legal][k])
    t = 0.5 * (lo + hi)
    return float(vr[k]), t if t < hi else lo


# ---------------------------------------------------------------------------
# grouped within-variance
#
# Weighted within-group variance of y under an integer group coding:
# sum_g P(g) * var(y | g), computed two-pass (means first) so it matches a
# direct group-by to ~1e-15.  Codes must lie in [0, n_groups).
# ---------------------------------------------------------------------------


def _grouped_within_variance_loop(codes, y, n_groups):
    n = codes.shape[0]
    counts = np.zeros(n_groups, np.int64)
    sums = np.zeros(n_groups)
    for i in range(n):
        g = codes[i]
        counts[g] += 1
        sums[g] += y[i]
    means = np.zeros(n_groups)
    for g in range(n_groups):
        if counts[g] > 0:
            means[g] = sums[g] / counts[g]
    acc = 0.0
    for i in range(n):
        d = y[i] - means[codes[i]]
        acc += d * d
    return acc / n


def _grouped_within_variance_np(codes, y, n_groups):
    counts = np.bincount(codes, minlength=n_groups)
    sums = np.bincount(codes, weights=y, minlength=n_groups)
    means = np.zeros(n_groups)
    nonzero = counts > 0
    means[nonzero] = sums[nonzero] / counts[nonzero]
    d = y - means[codes]
    return float(d @ d) / codes.shape[0]


# ---------------------------------------------------------------------------
# elastic-net coordinate descent
#
# Minimizes (1/n)||y - X b - b0||^2 + l1*||b||_1 + l2*||b||_2^2 by cyclic
# coordinate minimization with soft thresholding; the intercept (if fit) is
# re-minimized exactly after each sweep.  X must be Fortran-ordered so
# column slices are contiguous.  loss_out[i] receives the objective after
# sweep i.  Returns (beta, intercept, sweeps, converged) where converged is
# 1 when the max absolute coefficient change fell below tol.
# ---------------------------------------------------------------------------


def _enet_cd_loop(X, y, l1, l2, fit_intercept, max_iters, tol, loss_out):
    n, p = X.shape
    beta = np.zeros(p)
    resid = y.copy()
    b0 = 0.0
    if fit_intercept:
        b0 = resid.mean()
        resid -= b0
    z = np.empty(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += X[i, j] * X[i, j]
        z[j] = acc / n
    sweeps = 0
    converged = 0
    for it in range(max_iters):
        maxd = 0.0
        for j in range(p):
            bj = beta[j]
            acc = 0.0
            for i in range(n):
                acc += X[i, j] * resid[i]
            rho = acc / n + z[j] * bj
            denom = z[j] + l2
            if denom > 0.0:
                mag = abs(rho) - 0.5 * l1
                if mag > 0.0:
                    bnew = math.copysign(mag, rho) / denom
                else:
                    bnew = 0.0
            else:
                bnew = 0.0
            if bnew != bj:
                step = bj - bnew
                for i in range(n):
                    resid[i] += X[i, j] * step
                beta[j] = bnew
                d = abs(bnew - bj)
                if d > maxd:
                    maxd = d
        if fit_intercept:
            db = resid.mean()
            b0 += db
            resid -= db
        penalty = 0.0
        for j in range(p):
            penalty += l1 * abs(beta[j]) + l2 * beta[j] * beta[j]
        loss_out[it] = (resid @ resid) / n + penalty
        sweeps = it + 1
        if maxd < tol:
            converged = 1
            break
    return beta, b0, sweeps, converged


def _enet_cd_np(X, y, l1, l2, fit_intercept, max_iters, tol, loss_out):
    n, p = X.shape
    beta = np.zeros(p)
    resid = y.copy()
    b0 = 0.0
    if fit_intercept:
        b0 = resid.mean()
        resid -= b0
    z = np.einsum("ij,ij->j", X, X) / n
    sweeps = 0
    converged = 0
    for it in range(max_iters):
        maxd = 0.0
        for j in range(p):
            col = X[:, j]
            bj = beta[j]
            rho = (col @ resid) / n + z[j] * bj
            denom = z[j] + l2
            if denom > 0.0:
                mag = abs(rho) - 0.5 * l1
                bnew = math.copysign(mag, rho) / denom if mag > 0.0 else 0.0
            else:
                bnew = 0.0
            if bnew != bj:
                resid += col * (bj - bnew)
                beta[j] = bnew
                maxd = max(maxd, abs(bnew - bj))
        if fit_intercept:
            db = resid.mean()
            b0 += db
            resid -= db
        loss_out[it] = (resid @ resid) / n + l1 * np.abs(beta).sum() + l2 * (beta @ beta)
        sweeps = it + 1
        if maxd < tol:
            converged = 1
            break
    return beta, b0, sweeps, converged


if HAVE_NUMBA:
    import numba as nb

    _numeric_split_scan_nb = nb.njit(cache=True)(_numeric_split_scan_loop)
    _grouped_within_variance_nb = nb.njit(cache=True)(_grouped_within_variance_loop)
    _enet_cd_nb = nb.njit(cache=True)(_enet_cd_loop)

if USE_NUMBA:
    numeric_split_scan = _numeric_split_scan_nb
    grouped_within_variance = _grouped_within_variance_nb
    enet_cd = _enet_cd_nb
else:
    numeric_split_scan = _numeric_split_scan_np
    grouped_within_variance = _grouped_within_variance_np
    enet_cd = _enet_cd_np
