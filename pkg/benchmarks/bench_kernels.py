"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5]

Times the batched cell products used by the polarization loop (real and complex)
and the spanning-tree line integration used by the boundary potentials, checks
that both backends agree, and prints one row per (kernel, size).
"""
import argparse
import timeit

import numpy as np

from xrel import _kernels
from xrel._kernels import _pykernels


def best(fn, repeat):
    fn()  # warm up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def cases(n, rng):
    q = 2
    a = rng.standard_normal((n * n, q, q))
    b = rng.standard_normal((n * n, q, q))
    bc = rng.standard_normal((n * n // 2 + n, q, q)) + 1j * rng.standard_normal((n * n // 2 + n, q, q))
    mask = np.zeros((n, n), dtype=np.uint8)
    yy, xx = np.mgrid[:n, :n]
    mask[(xx - n / 2) ** 2 + (yy - n / 2) ** 2 < (0.4 * n) ** 2] = 1
    root = int(np.flatnonzero(mask)[0])
    order, parent = _pykernels.bfs_tree(mask, root)[:2]
    inc = rng.standard_normal((len(order), 4))
    rv = np.zeros(4)
    ac = a[: len(bc)]
    return {
        "cell_matmul_real": (lambda: _pykernels.cell_matmul(a, b), lambda: _kernels._c_cell_matmul(a, b)),
        "cell_matmul_complex": (lambda: _pykernels.cell_matmul(ac, bc), lambda: _kernels._c_cell_matmul(ac, bc)),
        "bfs_tree": (lambda: _pykernels.bfs_tree(mask, root), lambda: _kernels._ckernels.bfs_tree(mask, root)),
        "tree_integrate": (lambda: _pykernels.tree_integrate(order, parent, inc, rv),
                           lambda: _kernels._c_tree_integrate(order, parent, inc, rv)),
    }


def agree(x, y):
    if isinstance(x, tuple):
        return all(agree(a, b) for a, b in zip(x, y))
    return bool(np.allclose(np.asarray(x), np.asarray(y), rtol=1e-13, atol=1e-13))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _kernels._ckernels is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython and a C compiler available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'N':>6}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}  agree")
    for n in args.sizes:
        for name, (py, c) in cases(n, rng).items():
            tp, tc = best(py, args.repeat), best(c, args.repeat)
            print(f"{name:<22}{n:>6}{1e3 * tp:>14.3f}{1e3 * tc:>14.3f}{tp / tc:>10.1f}  {agree(py(), c())}")


if __name__ == "__main__":
    main()
