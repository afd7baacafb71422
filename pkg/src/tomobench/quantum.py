"""States, measurements and the generalized Gell-Mann coordinate system.

Conventions
-----------
Index 0 of every coordinate vector is the identity component
``G_0 = I / sqrt(d)``.  Indices 1..d**2-1 are the traceless generators in
the fixed order: symmetric pairs (j < k, lexicographic), antisymmetric
pairs (same order), then the d-1 diagonal generators.  All generators are
normalized so that ``Tr(G_k G_l) = delta_kl``.

Density matrices and kets are plain complex ``numpy`` arrays; functions
that need a physical state validate it on entry.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import (
    DegenerateMeasurementError,
    DegenerateProjectionError,
    InvalidInputError,
)
from .matlin import (
    HERMITIAN_TOL,
    NEGATIVE_EIG_TOL,
    check_hermitian,
    default_rel_tol,
    hermitian_eigh,
    sqrt_psd,
)


@dataclass(frozen=True, eq=False)
class GeneratorBasis:
    """Orthonormal Hermitian operator basis, identity component first."""

    dim: int
    matrices: np.ndarray  # (d*d, d, d), read-only

    @property
    def gamma0(self):
        return self.matrices[0]

    @property
    def gammas(self):
        """The d**2 - 1 traceless generators."""
        return self.matrices[1:]

    def __len__(self):
        return self.matrices.shape[0]


@lru_cache(maxsize=None)
def gell_mann_basis(d):
    """Generalized Gell-Mann basis of dimension ``d`` (see module docstring)."""
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise InvalidInputError(f"dimension must be an integer >= 2, got {d!r}")
    d = int(d)
    mats = [np.eye(d, dtype=np.complex128) / np.sqrt(d)]
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    for j, k in pairs:
        g = np.zeros((d, d), dtype=np.complex128)
        g[j, k] = g[k, j] = 1.0 / np.sqrt(2.0)
        mats.append(g)
    for j, k in pairs:
        g = np.zeros((d, d), dtype=np.complex128)
        g[j, k] = -1j / np.sqrt(2.0)
        g[k, j] = 1j / np.sqrt(2.0)
        mats.append(g)
    for ell in range(1, d):
        diag = np.zeros(d)
        diag[:ell] = 1.0
        diag[ell] = -ell
        mats.append(np.diag(diag / np.sqrt(ell * (ell + 1.0))).astype(np.complex128))
    stack = np.array(mats)
    stack.setflags(write=False)
    return GeneratorBasis(d, stack)


def check_density_matrix(rho, tol=HERMITIAN_TOL):
    """Validate a physical state and return it as a complex array."""
    a = check_hermitian(np.asarray(rho, dtype=np.complex128), tol, "density matrix")
    if abs(np.trace(a).real - 1.0) > tol:
        raise InvalidInputError(f"density matrix trace is {np.trace(a).real!r}, expected 1")
    w = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    if w[0] < -NEGATIVE_EIG_TOL:
        raise InvalidInputError(f"density matrix has negative eigenvalue {w[0]:.3e}")
    return a


def haar_pure(d, rng):
    """Haar-random unit ket: normalized vector of iid complex Gaussians."""
    return haar_kets(d, 1, rng)[0]


def haar_kets(d, n, rng):
    """``n`` independent Haar-random kets as rows of an (n, d) array."""
    if d < 2:
        raise InvalidInputError(f"dimension must be >= 2, got {d}")
    z = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def ket_to_density(ket):
    ket = np.asarray(ket, dtype=np.complex128)
    return np.outer(ket, ket.conj())


def depolarize(rho, lam):
    """Convex mixture (1 - lam) rho + lam I/d."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError(f"admixture must lie in [0, 1], got {lam}")
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[0]
    return (1.0 - lam) * rho + lam * np.eye(d) / d


def random_state(d, admixture, rng):
    """Haar pure state mixed with ``admixture`` of the maximally mixed state."""
    return depolarize(ket_to_density(haar_pure(d, rng)), admixture)


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered POVM elements stacked as an (m, d, d) array.

    Construction validates Hermiticity, positivity and completeness.
    """

    elements: np.ndarray

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=np.complex128)
        if el.ndim != 3 or el.shape[1] != el.shape[2] or el.shape[0] < 1:
            raise InvalidInputError(f"POVM elements must have shape (m, d, d), got {el.shape}")
        if not np.all(np.isfinite(el)):
            raise InvalidInputError("POVM contains NaN or Inf")
        herm_err = np.abs(el - el.conj().transpose(0, 2, 1)).max()
        if herm_err > HERMITIAN_TOL:
            raise InvalidInputError(f"POVM element not Hermitian (error {herm_err:.2e})")
        w = np.linalg.eigvalsh(0.5 * (el + el.conj().transpose(0, 2, 1)))
        if w.min() < -NEGATIVE_EIG_TOL:
            raise InvalidInputError(f"POVM element has negative eigenvalue {w.min():.3e}")
        completeness = np.abs(el.sum(axis=0) - np.eye(el.shape[1])).max()
        if completeness > HERMITIAN_TOL:
            raise InvalidInputError(f"POVM elements do not sum to identity (error {completeness:.2e})")
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)

    @property
    def dim(self):
        return self.elements.shape[1]

    @property
    def m(self):
        return self.elements.shape[0]

    def __len__(self):
        return self.m


def square_root_povm(kets, rel_tol=None):
    """Square-root ("pretty good") measurement built from a ket family.

    ``Pi_j = G^{-1/2} |phi_j><phi_j| G^{-1/2}`` with ``G = sum_j |phi_j><phi_j|``.
    Raises DegenerateMeasurementError when G is rank deficient.
    """
    phi = np.atleast_2d(np.asarray(kets, dtype=np.complex128))
    m, d = phi.shape
    if m < 1:
        raise InvalidInputError("need at least one ket")
    gram = phi.T @ phi.conj()  # sum_j |phi_j><phi_j|
    w, v = hermitian_eigh(0.5 * (gram + gram.conj().T))
    if rel_tol is None:
        rel_tol = default_rel_tol(gram.shape)
    if w[0] < rel_tol * w[-1]:
        rank = int(np.sum(w >= rel_tol * w[-1]))
        raise DegenerateMeasurementError(f"frame operator has rank {rank} < {d}")
    g_inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    psi = phi @ g_inv_sqrt.T  # rows are G^{-1/2}|phi_j>
    return Povm(np.einsum("ja,jb->jab", psi, psi.conj()))


def computational_povm(d):
    return Povm(np.array([np.diag(np.eye(d)[j]).astype(np.complex128) for j in range(d)]))


def _check_basis(dim, basis):
    if basis.dim != dim:
        raise InvalidInputError(f"dimension mismatch: state d={dim}, basis d={basis.dim}")


def bloch_coords(mats, basis):
    """Coordinates ``Re Tr(H_i G_k)`` of a stack of Hermitian matrices."""
    mats = np.asarray(mats, dtype=np.complex128)
    if mats.ndim == 2:
        mats = mats[None]
    _check_basis(mats.shape[-1], basis)
    return _kernels.hermitian_coords(mats, basis.matrices)


def bloch_from_state(rho, basis):
    """Augmented Bloch vector ``r_k = Tr(rho G_k)``, k = 0..d**2-1."""
    rho = check_density_matrix(rho)
    return bloch_coords(rho, basis)[0]


def state_from_bloch(v, basis):
    """``sum_k v_k G_k``; Hermitian but not necessarily positive."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (len(basis),):
        raise InvalidInputError(f"expected {len(basis)} coordinates, got shape {v.shape}")
    return _kernels.coords_to_hermitian(v[None], basis.matrices)[0]


def born_probs(rho, povm):
    """Born probabilities Re Tr(rho Pi_j), tiny negatives clipped to zero."""
    rho = check_density_matrix(rho)
    if rho.shape[0] != povm.dim:
        raise InvalidInputError(f"dimension mismatch: state d={rho.shape[0]}, POVM d={povm.dim}")
    return born_matrix(povm, rho[None])[:, 0]


def born_matrix(povm, states):
    """(m, M) matrix of Born probabilities for a stack of M states.

    Column alpha holds ``Re Tr(rho_alpha Pi_j)``; values in [-1e-10, 0) are
    clipped to 0.
    """
    states = np.asarray(states, dtype=np.complex128)
    d = povm.dim
    if states.shape[1:] != (d, d):
        raise InvalidInputError(f"states have shape {states.shape[1:]}, POVM d={d}")
    pi_flat = povm.elements.reshape(povm.m, d * d)
    # Tr(rho Pi) = vec(Pi) . vec(rho^T)
    rho_t = states.transpose(0, 2, 1).reshape(len(states), d * d)
    p = (pi_flat @ rho_t.T).real
    if p.min(initial=0.0) < -NEGATIVE_EIG_TOL:
        raise InvalidInputError(f"negative Born probability {p.min():.3e}")
    return np.clip(p, 0.0, None)


def fidelity(rho, sigma, root=False):
    """Uhlmann-Jozsa fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``.

    With ``root=True`` the square root of that value is returned instead.
    """
    rho = check_density_matrix(rho)
    sigma = check_density_matrix(sigma)
    if rho.shape != sigma.shape:
        raise InvalidInputError("dimension mismatch")
    return fidelity_with_sqrt(sqrt_psd(rho), sigma, root=root)


def fidelity_with_sqrt(sqrt_rho, sigma, root=False):
    """Fidelity given a precomputed sqrt(rho); no validation."""
    inner = sqrt_rho @ sigma @ sqrt_rho
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    f = min(f, 1.0)
    return f if root else f * f


def project_to_physical(h):
    """Clip negative eigenvalues to zero and renormalize the trace to 1."""
    a = np.asarray(h, dtype=np.complex128)
    a = check_hermitian(a, tol=1e-8)
    a = 0.5 * (a + a.conj().T)
    w, v = hermitian_eigh(a)
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        raise DegenerateProjectionError("matrix has no positive eigenvalues")
    w = w / total
    return (v * w) @ v.conj().T
