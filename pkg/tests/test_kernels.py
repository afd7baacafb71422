import numpy as np
import pytest

from tomobench import _kernels
from tomobench.quantum import gell_mann_basis

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def random_hermitian(rng, n, d):
    z = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))
    return z + z.conj().transpose(0, 2, 1)


@pytest.mark.parametrize("d", [2, 3, 4, 6, 7])
def test_coords_paths_agree(rng, d):
    basis = gell_mann_basis(d)
    mats = random_hermitian(rng, 25, d)
    fast = _kernels.hermitian_coords_numba(mats, basis.matrices)
    dense = _kernels.hermitian_coords_numpy(mats, basis.matrices)
    np.testing.assert_allclose(fast, dense, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5, 6])
def test_reconstruction_paths_agree(rng, d):
    basis = gell_mann_basis(d)
    coords = rng.standard_normal((10, d * d))
    fast = _kernels.coords_to_hermitian_numba(coords, basis.matrices)
    dense = _kernels.coords_to_hermitian_numpy(coords, basis.matrices)
    np.testing.assert_allclose(fast, dense, atol=1e-12)


def test_coords_match_direct_traces(rng):
    basis = gell_mann_basis(4)
    h = random_hermitian(rng, 1, 4)[0]
    direct = [np.trace(h @ g).real for g in basis.matrices]
    np.testing.assert_allclose(_kernels.hermitian_coords(h[None], basis.matrices)[0], direct, atol=1e-12)


def test_backend_flag_is_reported():
    assert _kernels.BACKEND in ("numba", "numpy")
