"""Compare the compiled and numpy pair kernels on random dense weights.

    python3 benchmarks/bench_kernels.py [--sizes 256 512 1024] [--p 3.0]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from fracsemi import _kernels_py

try:
    from fracsemi import _kernels as _compiled
except ImportError:
    _compiled = None


def _problem(P: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal(P)
    W = rng.random((P, P))
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 0.0)
    return U, W


def _best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024, 2048])
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; timing the numpy kernels only")
    print(f"{'P':>6} {'kernel':>8} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'rel diff':>10}")
    for P in args.sizes:
        U, W = _problem(P)
        for name in ("energy", "grad"):
            f_py = getattr(_kernels_py, f"pair_{name}")
            t_py = _best(lambda: f_py(U, W, args.p), args.repeat)
            if _compiled is None:
                print(f"{P:>6} {name:>8} {1e3 * t_py:>10.3f} {'-':>10} {'-':>8} {'-':>10}")
                continue
            f_c = getattr(_compiled, f"pair_{name}")
            t_c = _best(lambda: f_c(U, W, args.p), args.repeat)
            a, b = f_py(U, W, args.p), f_c(U, W, args.p)
            if name == "grad":
                diff = np.max(np.abs(a[1] - b[1])) / np.max(np.abs(a[1]))
            else:
                diff = abs(a - b) / abs(a)
            print(f"{P:>6} {name:>8} {1e3 * t_py:>10.3f} {1e3 * t_c:>10.3f} {t_py / t_c:>8.2f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
