"""Hot kernels for expanding matrices in the generalized Gell-Mann basis.

Every probe state, POVM element and estimate passes through a change of
basis between d x d Hermitian matrices and d**2 real coordinates.  Two
implementations are kept side by side:

* ``*_numpy``: dense contraction against the stacked basis matrices.
* ``*_numba``: ``@njit`` loops exploiting the sparsity of the Gell-Mann
  construction (each generator has at most two off-diagonal entries), so a
  coordinate costs O(1) instead of O(d**2).

The numba path is selected unless the environment variable
``TOMOBENCH_NUMBA`` is set to ``0``/``false``/``no`` or numba is missing.
Both paths agree to rounding (see ``tests/test_kernels.py``) but are not
bit-identical, so the active backend is recorded in every ``meta.json``.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_flag = os.environ.get("TOMOBENCH_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("0", "false", "no", "off")
BACKEND = "numba" if USE_NUMBA else "numpy"


def hermitian_coords_numpy(mats, basis):
    """Re Tr(H_i G_k) for a stack ``mats`` (n, d, d) and basis (d*d, d, d)."""
    n, d, _ = mats.shape
    flat = mats.reshape(n, d * d)
    # Tr(H G) = sum_ab H_ab G_ba = vec(H) . vec(G^T)
    gt = basis.transpose(0, 2, 1).reshape(d * d, d * d)
    return np.ascontiguousarray((flat @ gt.T).real)


def coords_to_hermitian_numpy(coords, basis):
    """sum_k c_ik G_k for coords (n, d*d)."""
    n = coords.shape[0]
    d = basis.shape[1]
    out = coords.astype(np.complex128) @ basis.reshape(d * d, d * d)
    return out.reshape(n, d, d)


def _hermitian_coords_loops(mats):
    n, d, _ = mats.shape
    out = np.empty((n, d * d))
    npairs = d * (d - 1) // 2
    r2 = np.sqrt(2.0)
    rd = np.sqrt(float(d))
    for i in range(n):
        tr = 0.0
        for a in range(d):
            tr += mats[i, a, a].real
        out[i, 0] = tr / rd
        idx = 1
        for j in range(d):
            for k in range(j + 1, d):
                hjk = mats[i, j, k]
                hkj = mats[i, k, j]
                out[i, idx] = (hjk.real + hkj.real) / r2
                out[i, idx + npairs] = (hkj.imag - hjk.imag) / r2
                idx += 1
        idx = 1 + 2 * npairs
        prefix = mats[i, 0, 0].real
        for ell in range(1, d):
            hll = mats[i, ell, ell].real
            out[i, idx] = (prefix - ell * hll) / np.sqrt(ell * (ell + 1.0))
            prefix += hll
            idx += 1
    return out


def _coords_to_hermitian_loops(coords, d):
    n = coords.shape[0]
    out = np.zeros((n, d, d), dtype=np.complex128)
    npairs = d * (d - 1) // 2
    r2 = np.sqrt(2.0)
    rd = np.sqrt(float(d))
    for i in range(n):
        idx = 1
        for j in range(d):
            for k in range(j + 1, d):
                s = coords[i, idx] / r2
                a = coords[i, idx + npairs] / r2
                out[i, j, k] = complex(s, -a)
                out[i, k, j] = complex(s, a)
                idx += 1
        base = coords[i, 0] / rd
        for a in range(d):
            out[i, a, a] = base
        idx = 1 + 2 * npairs
        for ell in range(1, d):
            c = coords[i, idx] / np.sqrt(ell * (ell + 1.0))
            for a in range(ell):
                out[i, a, a] += c
            out[i, ell, ell] -= ell * c
            idx += 1
    return out


if HAVE_NUMBA:
    _hermitian_coords_jit = njit(cache=True)(_hermitian_coords_loops)
    _coords_to_hermitian_jit = njit(cache=True)(_coords_to_hermitian_loops)

    def hermitian_coords_numba(mats, basis=None):
        return _hermitian_coords_jit(np.ascontiguousarray(mats, dtype=np.complex128))

    def coords_to_hermitian_numba(coords, basis):
        d = basis.shape[1]
        return _coords_to_hermitian_jit(np.ascontiguousarray(coords, dtype=np.float64), d)


def hermitian_coords(mats, basis):
    """Dispatch to the active backend; ``mats`` has shape (n, d, d)."""
    if USE_NUMBA:
        return hermitian_coords_numba(mats, basis)
    return hermitian_coords_numpy(np.asarray(mats, dtype=np.complex128), basis)


def coords_to_hermitian(coords, basis):
    if USE_NUMBA:
        return coords_to_hermitian_numba(coords, basis)
    return coords_to_hermitian_numpy(np.asarray(coords, dtype=np.float64), basis)
