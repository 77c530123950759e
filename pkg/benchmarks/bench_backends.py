"""Compiled vs NumPy kernels: agreement and wall time.

    python benchmarks/bench_backends.py [--quick] [--csv out.csv]

Every kernel runs on identical inputs under both backends; outputs must
agree (bit-for-bit for the solver and the box scan, to 1e-12 relative for
floating-point reductions whose summation order differs).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from setinv import _pycore

try:
    from setinv import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None


def best_of(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def case_smo(n, rng):
    X = rng.uniform(-3, 3, size=(n, 2))
    y = np.where((X ** 2).sum(1) <= 2.0, 1.0, -1.0)
    d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    K = np.exp(-d2 / (2 * 0.85 ** 2))

    def run(core):
        def go():
            beta = np.zeros(n)
            it, gap, G = core.smo_solve(y, beta, 1e6, 1e-6, 200_000, K=K)
            return it, beta
        return go

    def same(a, b):
        return a[0] == b[0] and np.array_equal(a[1], b[1])

    return f"smo_solve n={n}", run, same


def case_decision(m, n_sv, dim, rng):
    P = rng.uniform(-1, 1, size=(m, dim))
    S = rng.uniform(-1, 1, size=(n_sv, dim))
    coef = rng.normal(size=n_sv)

    def run(core):
        return lambda: core.rbf_decision(P, S, coef, 0.1, 0.4)

    def same(a, b):
        return np.allclose(a, b, rtol=1e-12, atol=1e-12)

    return f"rbf_decision {m}x{n_sv} d={dim}", run, same


def case_scan(m, rng):
    from setinv.models import builtin_problem
    from setinv.sivia import sivia_invert

    sp = sivia_invert(builtin_problem("doughnut"), 0.05)
    P = rng.uniform(-3, 3, size=(m, 2))

    def run(core):
        return lambda: core.scan_classify(P, sp.lo, sp.hi, sp.kind)

    return f"scan_classify {m} pts x {sp.count()} boxes", run, np.array_equal


def case_lv(m, dt, rng):
    p2 = rng.uniform(0.01, 0.1, m)
    p4 = rng.uniform(0.01, 0.1, m)
    ones = np.ones(m)

    def run(core):
        return lambda: core.lv_min_prey(ones, p2, ones, p4, 50.0, 50.0, 20.0, dt)[0]

    def same(a, b):
        return np.allclose(a, b, rtol=1e-12, atol=0.0, equal_nan=True)

    return f"lv_min_prey {m} pts dt={dt:g}", run, same


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small sizes, single repeat")
    ap.add_argument("--csv", help="write results here")
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    q = args.quick
    cases = [
        case_smo(100 if q else 300, rng),
        case_decision(2_000 if q else 200_000, 50, 2, rng),
        case_decision(2_000 if q else 50_000, 200, 8, rng),
        case_scan(500 if q else 20_000, rng),
        case_lv(200 if q else 2_000, 1e-2, rng),
    ]
    repeats = 1 if q else 3
    rows = []
    print(f"{'kernel':<40}{'compiled s':>12}{'numpy s':>12}{'speedup':>9}  agree")
    for name, run, same in cases:
        tc, oc = best_of(run(_core), repeats)
        tp, op = best_of(run(_pycore), repeats)
        ok = bool(same(oc, op))
        rows.append({"kernel": name, "compiled_s": tc, "numpy_s": tp, "speedup": tp / tc, "agree": ok})
        print(f"{name:<40}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}  {ok}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0 if all(r["agree"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
