"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are imported directly, so the PANSHARP_LAB_NUMBA switch is not needed here.
"""
import argparse
import timeit

import numpy as np

from pansharp_lab import _kernels
from pansharp_lab._accel import HAVE_NUMBA


def cases(rng):
    band = rng.random((512, 512))
    X = rng.standard_normal((500, 4))
    y = np.where(X[:, 0] * X[:, 1] + 0.3 * rng.standard_normal(500) > 0, 1.0, -1.0)
    K = _kernels.rbf_kernel_numpy(X, X, 0.5)
    return {
        "a trous smooth 512x512, step 1": (
            lambda: _kernels.atrous_smooth_numpy(band, 1),
            lambda: _kernels.atrous_smooth_numba(band, 1),
        ),
        "a trous smooth 512x512, step 2": (
            lambda: _kernels.atrous_smooth_numpy(band, 2),
            lambda: _kernels.atrous_smooth_numba(band, 2),
        ),
        "RBF Gram 500x500x4": (
            lambda: _kernels.rbf_kernel_numpy(X, X, 0.5),
            lambda: _kernels.rbf_kernel_numba(X, X, 0.5),
        ),
        "SMO n=500, C=8": (
            lambda: _kernels.smo_numpy(K, y, 8.0, 1e-3, 100_000),
            lambda: _kernels.smo_numba(K, y, 8.0, 1e-3, 100_000),
        ),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; the numba column times the plain-Python loops")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, (f_np, f_nb) in cases(rng).items():
        f_nb()  # compile outside the timed region
        t_np = min(timeit.repeat(f_np, number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(f_nb, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<34}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
