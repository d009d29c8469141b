"""Time the compiled and pure-Python BEV overlap kernels on the same inputs.

Usage: python benchmarks/bench_iou.py [--n 300] [--repeats 5] [--seed 0]
"""

import argparse
import sys
import timeit

import numpy as np

from harmonic3d import _geom_py

try:
    from harmonic3d import _geomkernel
except ImportError:
    _geomkernel = None


def random_boxes(n, rng, extent=20.0):
    b = np.empty((n, 7))
    b[:, 0:2] = rng.uniform(-extent, extent, (n, 2))
    b[:, 2] = rng.uniform(-1.0, 1.0, n)
    b[:, 3] = rng.uniform(3.0, 5.0, n)
    b[:, 4] = rng.uniform(1.5, 2.1, n)
    b[:, 5] = rng.uniform(1.3, 1.9, n)
    b[:, 6] = rng.uniform(-np.pi, np.pi, n)
    return b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300, help="boxes per side of the pairwise matrix")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    a = random_boxes(args.n, rng)
    b = random_boxes(args.n, rng)
    # dense case: every pair overlaps, so the circumcircle filter never skips work
    dense = random_boxes(args.n // 3, rng, extent=0.5)

    kernels = [("python", _geom_py)]
    if _geomkernel is None:
        print("compiled kernel not built; timing the fallback only", file=sys.stderr)
    else:
        kernels.insert(0, ("cython", _geomkernel))

    ref = {name: None for name in ("sparse", "dense")}
    print(f"{'case':<8} {'backend':<8} {'pairs':>8} {'best_s':>10} {'us/pair':>9}")
    timings = {}
    for case, (x, y) in (("sparse", (a, b)), ("dense", (dense, dense))):
        for name, mod in kernels:
            out = mod.bev_intersection_matrix(x, y)
            if ref[case] is None:
                ref[case] = out
            elif not np.allclose(out, ref[case], rtol=0, atol=1e-9):
                print(f"backend mismatch on {case} case", file=sys.stderr)
                return 1
            t = min(timeit.repeat(lambda: mod.bev_intersection_matrix(x, y), number=1, repeat=args.repeats))
            timings[case, name] = t
            pairs = len(x) * len(y)
            print(f"{case:<8} {name:<8} {pairs:>8} {t:>10.4f} {1e6 * t / pairs:>9.3f}")
    if _geomkernel is not None:
        for case in ("sparse", "dense"):
            print(f"speedup {case}: {timings[case, 'python'] / timings[case, 'cython']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
