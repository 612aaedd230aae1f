"""Element-stiffness kernel: compiled extension against the numpy fallback.

Usage::

    python3 benchmarks/bench_assembly.py [--repeat 5]

Also times one reference-size solve split into assembly and factorization,
which is where the remaining runtime goes.
"""

import argparse
import time

import numpy as np

from tiemortar import _kernels
from tiemortar._kernels import _fallback
from tiemortar.saddle import build_system, get_method, solve
from tiemortar.study import get_preset


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-solve", action="store_true")
    args = parser.parse_args()

    if _kernels._core is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    print(f"{'degree':>6} {'elements':>9} {'compiled [s]':>13} {'numpy [s]':>10} {'speedup':>8} {'max diff':>9}")
    for degree in (1, 2):
        for nt in (10_000, 100_000, 400_000):
            coords = rng.random((nt, 3, 2))
            coords[:, 1, 0] += 1.5
            coords[:, 2, 1] += 1.5
            a = _kernels._core.elastic_local_matrices(coords, 384.6, 576.9, degree)
            b = _fallback.elastic_local_matrices(coords, 384.6, 576.9, degree)
            diff = np.abs(a - b).max() / np.abs(b).max()
            tc = best_of(lambda: _kernels._core.elastic_local_matrices(coords, 384.6, 576.9, degree), args.repeat)
            tn = best_of(lambda: _fallback.elastic_local_matrices(coords, 384.6, 576.9, degree), args.repeat)
            print(f"{degree:>6} {nt:>9} {tc:>13.4f} {tn:>10.4f} {tn / tc:>7.1f}x {diff:>9.1e}")

    if args.skip_solve:
        return
    preset = get_preset("square-square")
    sizes = preset.sizes(6, False)
    m1, m2 = preset.meshes(sizes)
    method = get_method("stab-p2p1")
    t0 = time.perf_counter()
    system = build_system(method, m1, m2, preset.material, *preset.dirichlet())
    t1 = time.perf_counter()
    solve(system)
    t2 = time.perf_counter()
    print(f"\nreference stab-p2p1 on {sizes}: {system.shape[0]} unknowns, "
          f"assembly {t1 - t0:.2f} s, factorization and solve {t2 - t1:.2f} s  (backend {_kernels.BACKEND})")


if __name__ == "__main__":
    main()
