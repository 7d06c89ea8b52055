"""Time the numba kernels against their pure-numpy fallbacks.

The package selects an engine once at import time (numba when importable,
unless DEMANDSTACK_DISABLE_NUMBA is set); this script bypasses that switch
and times both bindings side by side on identical inputs, so it answers
"what does the fallback cost on this machine" directly.  Each row also
cross-checks that the two engines agree on the result.

Split scans are timed as call batches at two node sizes because that is how
tree growth uses them: many small calls, where per-call overhead counts as
much as throughput.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

import argparse
import time

import numpy as np

from demandstack import kernels


def best_of(drive, fn, repeats):
    """Minimum wall time of drive(fn) over repeats, in milliseconds."""
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        drive(fn)
        times.append(time.perf_counter() - start)
    return 1e3 * min(times)


def agreement(a, b) -> float:
    if isinstance(a, tuple):
        return max(agreement(x, y) for x, y in zip(a, b))
    fa = np.atleast_1d(np.asarray(a, dtype=np.float64))
    fb = np.atleast_1d(np.asarray(b, dtype=np.float64))
    return float(np.max(np.abs(fa - fb)))


def scan_batch(rng, calls, n):
    xs = [rng.normal(size=n) for _ in range(calls)]
    ys = [x * 0.7 + rng.normal(size=n) for x in xs]

    def drive(fn):
        return tuple(fn(x, y, 1)[0] for x, y in zip(xs, ys))

    return drive


def cases(rng):
    yield ("numeric_split_scan (500 calls, n=200)", "numeric_split_scan",
           scan_batch(rng, 500, 200))
    yield ("numeric_split_scan (100 calls, n=2000)", "numeric_split_scan",
           scan_batch(rng, 100, 2000))

    n = 200_000
    y = rng.normal(size=n)
    codes = rng.integers(0, 30, size=n)
    yield ("grouped_within_variance (n=200k, 30 groups)", "grouped_within_variance",
           lambda fn: fn(codes, y, 30))

    m, p = 5_000, 40
    X = np.asfortranarray(rng.normal(size=(m, p)))
    ym = X @ rng.normal(size=p) + rng.normal(size=m)
    sweeps = 200
    # tol=0 forces every sweep to run, so both engines do identical work
    yield (f"enet_cd (n=5k, p=40, {sweeps} sweeps)", "enet_cd",
           lambda fn: fn(X, ym, 0.05, 0.02, True, sweeps, 0.0, np.empty(sweeps)))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions per kernel; the minimum wins")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not kernels.HAVE_NUMBA:
        print("numba is not importable here; timing the numpy fallback only\n")

    rng = np.random.default_rng(args.seed)
    header = (f"{'workload':<46} {'numba ms':>10} {'numpy ms':>10}"
              f" {'numpy/numba':>12} {'max diff':>10}")
    print(header)
    print("-" * len(header))
    for label, stem, drive in cases(rng):
        np_fn = getattr(kernels, f"_{stem}_np")
        np_out = drive(np_fn)
        t_np = best_of(drive, np_fn, args.repeats)
        if kernels.HAVE_NUMBA:
            nb_fn = getattr(kernels, f"_{stem}_nb")
            nb_out = drive(nb_fn)  # compile before timing
            t_nb = best_of(drive, nb_fn, args.repeats)
            diff = agreement(nb_out, np_out)
            print(f"{label:<46} {t_nb:>10.2f} {t_np:>10.2f}"
                  f" {t_np / t_nb:>11.1f}x {diff:>10.1e}")
        else:
            print(f"{label:<46} {'-':>10} {t_np:>10.2f} {'-':>12} {'-':>10}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
