"""Time the numba and numpy Gell-Mann kernels, then one sweep point per backend.

    python3 benchmarks/bench_kernels.py [--dims 4 6 10] [--n 1200]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tomobench import _kernels
from tomobench.quantum import gell_mann_basis, haar_kets

END_TO_END = """
import time
from tomobench.experiments import ExperimentConfig, run_experiment
cfg = ExperimentConfig.defaults("fig1").updated({"M_grid": [1200], "N_grid": [1000], "trials": 100, "bootstrap": 0})
run_experiment(cfg.updated({"trials": 2}))  # warm-up and JIT compile
start = time.perf_counter()
run_experiment(cfg)
print(f"{time.perf_counter() - start:.3f}")
"""


def best_of(fn, repeat=5):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_table(dims, n):
    rng = np.random.default_rng(0)
    print(f"{'d':>3} {'kernel':<22} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for d in dims:
        basis = gell_mann_basis(d).matrices
        kets = haar_kets(d, n, rng)
        mats = np.einsum("ni,nj->nij", kets, kets.conj())
        coords = _kernels.hermitian_coords_numpy(mats, basis)
        pairs = [
            ("hermitian_coords", _kernels.hermitian_coords_numpy, _kernels.hermitian_coords_numba, mats),
            ("coords_to_hermitian", _kernels.coords_to_hermitian_numpy, _kernels.coords_to_hermitian_numba, coords),
        ]
        for name, slow, fast, arg in pairs:
            fast(arg, basis)  # compile
            t_np = best_of(lambda: slow(arg, basis))
            t_nb = best_of(lambda: fast(arg, basis))
            print(f"{d:>3} {name:<22} {1e3 * t_np:>11.3f} {1e3 * t_nb:>11.3f} {t_np / t_nb:>7.1f}x")


def end_to_end():
    print("\nfig1 point (d=6, m=40, M=1200, N=1000, 100 trials):")
    for flag in ("0", "1"):
        env = dict(os.environ, TOMOBENCH_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        print(f"  {'numba' if flag == '1' else 'numpy'}: {float(out.stdout):.2f} s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", type=int, nargs="+", default=[4, 6, 10])
    parser.add_argument("--n", type=int, default=1200, help="matrices per call")
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not installed")
    kernel_table(args.dims, args.n)
    if not args.skip_end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
