"""Compare the pure-numpy and compiled kernel backends on solver-shaped data.

Run from the repo root:

    python3 benchmarks/bench_kernels.py [--inner 2000]

Times the hot kernels at desk scale (M=16) and at M=64. Both backends are
imported directly, so the comparison works regardless of which one the
package selected at import.
"""

import argparse
import statistics
import time

import numpy as np

from irsmm._kernels import pure

try:
    from irsmm._kernels import _speedups as compiled
except ImportError:
    compiled = None


def hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A @ A.conj().T / n


def cases(rng):
    for M in (16, 64):
        X = hermitian(rng, M + 1)
        yield f"lambda_max_power {M + 1}x{M + 1}", lambda b, X=X: b.lambda_max_power(X, 1e-10, 5000)
        H = rng.normal(size=(4, M + 1, 4)) + 1j * rng.normal(size=(4, M + 1, 4))
        e = np.exp(1j * rng.uniform(0, 2 * np.pi, M + 1))
        F = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        yield f"eq_products K=4 M={M}", lambda b, H=H, e=e, F=F: b.eq_products(H, e, F)
        z = rng.normal(size=M + 1) + 1j * rng.normal(size=M + 1)
        yield f"unit_phases {M + 1}", lambda b, z=z: b.unit_phases(z)
    v = rng.normal(size=8)
    yield "lse_min 8", lambda b: b.lse_min(v, 100.0)
    yield "softmin_weights 8", lambda b: b.softmin_weights(v, 100.0)


def best_of(fn, inner, repeats=7):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return statistics.median(samples) * 1e6  # microseconds


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--inner", type=int, default=2000, help="calls per timing sample")
    args = ap.parse_args()
    if compiled is None:
        print("compiled backend not built; showing pure-numpy timings only")
    rng = np.random.default_rng(0)
    rows = []
    for name, call in cases(rng):
        t_pure = best_of(lambda: call(pure), args.inner)
        if compiled is not None:
            t_comp = best_of(lambda: call(compiled), args.inner)
            rows.append((name, t_pure, t_comp, t_pure / t_comp))
        else:
            rows.append((name, t_pure, None, None))
    width = max(len(r[0]) for r in rows)
    header = f"{'kernel':<{width}}  {'pure us':>9}  {'compiled us':>11}  {'speedup':>7}"
    print(header)
    print("-" * len(header))
    for name, tp, tc, sp in rows:
        if tc is None:
            print(f"{name:<{width}}  {tp:9.2f}  {'-':>11}  {'-':>7}")
        else:
            print(f"{name:<{width}}  {tp:9.2f}  {tc:11.2f}  {sp:6.1f}x")


if __name__ == "__main__":
    main()
