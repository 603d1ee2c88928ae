"""Compare the numba and numpy kernel backends, and put them in context.

    python3 benchmarks/bench_kernels.py [--sites 10] [--repeat 5]

Prints the best-of-``repeat`` wall time of every index-permutation kernel
on both backends, followed by the dense LAPACK operations (``eigh`` and
``expm``) that one integration step of the decomposition sweep performs.
"""

import argparse
import time

import numpy as np
import scipy.linalg as sla

from arealaw import _kernels
from arealaw.hamiltonian import assemble, tfim_path
from arealaw.lattice import Lattice


def best_of(fn, repeat):
    fn()  # warm-up (and numba compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(n, rng):
    dim = 2**n
    X = rng.normal(size=(dim, dim))
    keep_small = tuple(range(n // 2 - 1, n // 2 + 1))
    keep_half = tuple(range(n // 2))
    idx_small = _kernels.gather_table(n, 2, keep_small)
    idx_half = _kernels.gather_table(n, 2, keep_half)
    op_small = rng.normal(size=(4, 4))
    op_half = rng.normal(size=(idx_half.shape[0],) * 2)
    E = np.sort(rng.normal(size=dim))
    return {
        "partial_trace (2 sites kept)": lambda: _kernels.partial_trace(X, idx_small),
        "expand (half chain)": lambda: _kernels.expand(op_half, idx_half),
        "apply_left (2-site op)": lambda: _kernels.apply_left(op_small, idx_small, X),
        "apply_right (2-site op)": lambda: _kernels.apply_right(X, op_small, idx_small),
        "filter_weights": lambda: _kernels.filter_weights(E, 1.0),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sites", type=int, default=10)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    cases = kernel_cases(args.sites, rng)
    print(f"kernels on {args.sites} sites (dimension {2**args.sites}), best of {args.repeat}")
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for name, fn in cases.items():
        res = {}
        for backend in ("numpy", "numba"):
            prev = _kernels.set_backend(backend)
            try:
                res[backend] = best_of(fn, args.repeat)
            finally:
                _kernels.set_backend(prev)
        print(
            f"{name:32s} {1e3 * res['numpy']:12.2f} {1e3 * res['numba']:12.2f}"
            f" {res['numpy'] / res['numba']:9.1f}x"
        )

    path = tfim_path(Lattice.chain(args.sites), lam=0.5, gap_floor=1.0)
    H = assemble(path, 0.5)
    K = rng.normal(size=H.shape)
    K = 0.01 * (K - K.T)
    print()
    print("dense LAPACK work per sweep step, for scale")
    print(f"{'eigh':32s} {1e3 * best_of(lambda: np.linalg.eigh(H), args.repeat):12.2f} ms")
    print(f"{'expm':32s} {1e3 * best_of(lambda: sla.expm(K), args.repeat):12.2f} ms")
    print(f"{'matmul':32s} {1e3 * best_of(lambda: K @ K, args.repeat):12.2f} ms")


if __name__ == "__main__":
    main()
