"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--n 256 1024 4096] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from tvcs import _kernels_py
from tvcs._backend import compiled_kernels
from tvcs.haar import NonDyadicHaar
from tvcs.signals import equidistant_faces, separation_discrete
from tvcs.tree import build_tree, extended_support
from tvcs.width import GAMMA


def cases(n, rng):
    faces = equidistant_faces(n, max(1, n // 64))
    sbar = extended_support(faces, separation_discrete(faces, n).delta, n, check_separation=False)
    t = build_tree(sbar, n)
    h = NonDyadicHaar(t)
    sign_ext = np.zeros(n + 1)
    sign_ext[faces] = np.where(np.arange(faces.size) % 2, -1.0, 1.0)
    G = rng.standard_normal((32, n))
    V = rng.standard_normal((32, n - 1))
    u = np.abs(rng.standard_normal(32))
    return {
        "build_tree_arrays": lambda k: k.build_tree_arrays(sbar, n),
        "dual_fill (32 draws)": lambda k: k.dual_fill(
            t.pivot, t.left, t.right, t.label, t.level, h.d, h.d_left, h.d_right,
            sign_ext, G, 1.0, int(t.top_depth), GAMMA),
        "linf epigraph (32 rows)": lambda k: k.project_linf_epigraph(u, V),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled_kernels is None:
        print("compiled kernels unavailable; only the Python timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'n':>6}{'python [ms]':>14}{'compiled [ms]':>15}{'speedup':>9}")
    for n in args.n:
        for name, fn in cases(n, rng).items():
            t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
            if compiled_kernels is None:
                print(f"{name:<26}{n:>6}{1e3 * t_py:>14.3f}{'-':>15}{'-':>9}")
                continue
            t_c = min(timeit.repeat(lambda: fn(compiled_kernels), number=1, repeat=args.repeat))
            print(f"{name:<26}{n:>6}{1e3 * t_py:>14.3f}{1e3 * t_c:>15.3f}{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
