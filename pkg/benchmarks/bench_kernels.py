"""Compiled vs numpy SVM kernels on the same problems.

    python benchmarks/bench_kernels.py [--sizes 200 350 800] [--repeat 3]

Both backends get identical inputs; the script checks that they agree before
timing them.
"""
import argparse
import time

import numpy as np

from ibrstab.asm import _kernels_py

try:
    from ibrstab.asm import _kernels
except ImportError:
    _kernels = None


def disk_problem(n, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.0, 1.0, size=(n, 2))
    y = np.where(np.linalg.norm(z - 0.5, axis=1) <= 0.25, 1.0, -1.0)
    return z, y


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 350, 800])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--gamma", type=float, default=3.0)
    ap.add_argument("--C", type=float, default=1000.0)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return
    print(f"{'n':>6} {'kernel':>10} {'numpy s':>10} {'cython s':>10} {'speedup':>8}")
    for n in args.sizes:
        z, y = disk_problem(n)
        q = np.random.default_rng(1).uniform(0.0, 1.0, size=(20_000, 2))
        K = _kernels_py.rbf_matrix(z, z, args.gamma)
        rows = {}
        for name, call in (
            ("gram", lambda m: m.rbf_matrix(z, z, args.gamma)),
            ("smo", lambda m: m.smo_solve(K, y, args.C, 1e-4, 200_000)),
        ):
            tp, outp = best_of(lambda: call(_kernels_py), args.repeat)
            tc, outc = best_of(lambda: call(_kernels), args.repeat)
            a = outp if name == "gram" else outp[0]
            b = outc if name == "gram" else outc[0]
            assert np.array_equal(a, b), f"{name}: backends disagree"
            rows[name] = (tp, tc)
            if name == "smo":
                alpha = outc[0]
                coef, keep = (alpha * y)[alpha > 0], alpha > 0
                bias = outc[1]
        dp, dc_out = best_of(lambda: _kernels_py.rbf_decision(q, z[keep], coef, bias, args.gamma), args.repeat)
        dc, dcy = best_of(lambda: _kernels.rbf_decision(q, z[keep], coef, bias, args.gamma), args.repeat)
        assert np.array_equal(dc_out, dcy), "decision: backends disagree"
        rows["decision"] = (dp, dc)
        for name, (tp, tc) in rows.items():
            print(f"{n:6d} {name:>10} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
