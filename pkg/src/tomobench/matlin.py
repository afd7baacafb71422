"""Dense linear algebra used by the estimators.

All functions accept real or complex ``numpy`` arrays, never modify their
inputs, and reject non-finite entries.
"""
import numpy as np

from .errors import InvalidInputError, NumericalFailureError

HERMITIAN_TOL = 1e-10
NEGATIVE_EIG_TOL = 1e-10


def default_rel_tol(shape):
    """Standard SVD truncation heuristic max(rows, cols) * eps."""
    return max(shape) * np.finfo(np.float64).eps


def _as_finite_matrix(m, name="matrix"):
    a = np.asarray(m)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return a


def _svd(a, compute_uv=True):
    try:
        return np.linalg.svd(a, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD did not converge: {exc}") from exc


def pseudoinverse(m, rel_tol=None):
    """Moore-Penrose pseudoinverse via a truncated SVD.

    Singular values with ``s < rel_tol * s.max()`` are treated as exact
    zeros.  For complex input the conjugate transpose is used, so the same
    contract covers both cases.
    """
    a = _as_finite_matrix(m)
    if rel_tol is None:
        rel_tol = default_rel_tol(a.shape)
    if rel_tol < 0:
        raise InvalidInputError("rel_tol must be non-negative")
    u, s, vh = _svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.shape[::-1], dtype=a.dtype)
    keep = s >= rel_tol * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vh.conj().T * inv_s) @ u.conj().T


def singular_values(m):
    return _svd(_as_finite_matrix(m), compute_uv=False)


def condition_number(m, rel_tol=None):
    """Ratio of extreme singular values.

    Returns ``inf`` when any of the min(rows, cols) singular values falls
    below ``rel_tol * s_max``.
    """
    a = _as_finite_matrix(m)
    s = _svd(a, compute_uv=False)
    if s[0] == 0.0:
        raise InvalidInputError("condition number of the zero matrix is undefined")
    if rel_tol is None:
        rel_tol = default_rel_tol(a.shape)
    if s[-1] < rel_tol * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


def frobenius_norm(m):
    a = np.asarray(m)
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def trace_norm(m):
    """Sum of singular values (Schatten-1 norm)."""
    return float(np.sum(singular_values(m)))


def check_hermitian(h, tol=HERMITIAN_TOL, name="matrix"):
    """Raise unless ||H - H^dag||_F / ||H||_F <= tol; returns H as an array."""
    a = _as_finite_matrix(h, name)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got {a.shape}")
    scale = frobenius_norm(a)
    if scale > 0 and frobenius_norm(a - a.conj().T) / scale > tol:
        raise InvalidInputError(f"{name} is not Hermitian to {tol:g}")
    return a


def hermitian_eigh(h):
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigendecomposition failed: {exc}") from exc


def inv_sqrt_psd(h, rel_tol=None):
    """H^{-1/2} on the support of a Hermitian PSD matrix.

    Eigenvalues below ``rel_tol * lambda_max`` are mapped to zero, so
    ``X @ H @ X`` is the projector onto the retained eigenspace.
    """
    a = check_hermitian(h)
    a = 0.5 * (a + a.conj().T)
    w, v = hermitian_eigh(a)
    lam_max = w[-1]
    if w[0] < -NEGATIVE_EIG_TOL * max(1.0, abs(lam_max)):
        raise InvalidInputError(f"matrix has a negative eigenvalue {w[0]:.3e}")
    if lam_max <= 0:
        raise InvalidInputError("matrix has no positive eigenvalue")
    if rel_tol is None:
        rel_tol = default_rel_tol(a.shape)
    keep = w >= rel_tol * lam_max
    f = np.zeros_like(w)
    f[keep] = 1.0 / np.sqrt(w[keep])
    return (v * f) @ v.conj().T


def sqrt_psd(h):
    """Principal square root of a Hermitian matrix, negatives clipped to 0."""
    a = 0.5 * (np.asarray(h) + np.asarray(h).conj().T)
    w, v = hermitian_eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
