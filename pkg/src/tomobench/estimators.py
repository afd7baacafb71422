"""Linear-inversion tomography estimators and the Poisson Cramer-Rao bound.

Everything works in the augmented coordinate system of
:mod:`tomobench.quantum`: design matrices are m x d**2 with the identity
column first, probe matrices are d**2 x M with constant row 0.  Errors are
measured on the traceless coordinates only (index 0 dropped).
"""
from dataclasses import dataclass

import numpy as np

from .errors import (
    InformationallyIncompleteError,
    InvalidInputError,
    SingularStatisticsError,
)
from .matlin import default_rel_tol, pseudoinverse
from .quantum import GeneratorBasis, Povm, bloch_coords

P_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Map from augmented Bloch coordinates to outcome probabilities."""

    full: np.ndarray  # (m, d*d), A_jk = Re Tr(Pi_j G_k)

    @property
    def traceless(self):
        return self.full[:, 1:]

    @property
    def m(self):
        return self.full.shape[0]

    @property
    def d(self):
        return int(round(np.sqrt(self.full.shape[1])))


def _as_matrix(a):
    return a.full if isinstance(a, DesignMatrix) else np.asarray(a, dtype=np.float64)


def design_matrix(povm: Povm, basis: GeneratorBasis) -> DesignMatrix:
    if povm.dim != basis.dim:
        raise InvalidInputError(f"dimension mismatch: POVM d={povm.dim}, basis d={basis.dim}")
    full = bloch_coords(povm.elements, basis)
    full.setflags(write=False)
    return DesignMatrix(full)


def ols(a, f, rel_tol=None):
    """Ordinary least squares ``A^+ f``."""
    a = _as_matrix(a)
    f = np.asarray(f, dtype=np.float64)
    if a.shape[0] != f.shape[0]:
        raise InvalidInputError(f"design has {a.shape[0]} rows but data has length {f.shape[0]}")
    return pseudoinverse(a, rel_tol) @ f


def _cholesky_factor(cov):
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0]
    if cov.shape != (n, n) or not np.all(np.isfinite(cov)):
        raise InvalidInputError("covariance must be a finite square matrix")
    if np.abs(cov - cov.T).max() > 1e-10 * max(1.0, np.abs(cov).max()):
        raise InvalidInputError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    w = np.linalg.eigvalsh(cov)
    if w[-1] <= 0 or w[0] < -1e-10 * w[-1]:
        raise InvalidInputError(f"covariance is not positive semidefinite (min eig {w[0]:.3e})")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # semidefinite: lift the null space just enough to factor
        jitter = default_rel_tol(cov.shape) * w[-1]
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("covariance is not Cholesky-factorable") from exc


def gls(a, f, cov, rel_tol=None):
    """Generalized least squares ``(C^-1 A)^+ C^-1 f`` with ``cov = C C^T``."""
    a = _as_matrix(a)
    f = np.asarray(f, dtype=np.float64)
    if a.shape[0] != f.shape[0]:
        raise InvalidInputError(f"design has {a.shape[0]} rows but data has length {f.shape[0]}")
    c = _cholesky_factor(cov)
    if c.shape[0] != f.shape[0]:
        raise InvalidInputError("covariance size does not match data length")
    wa = np.linalg.solve(c, a)
    wf = np.linalg.solve(c, f)
    return pseudoinverse(wa, rel_tol) @ wf


def poisson_covariance(f, n_events):
    """Diagonal covariance estimate diag(max(f_j, 1/(10 N))) / N."""
    f = np.asarray(f, dtype=np.float64)
    floor = 1.0 / (10.0 * n_events)
    return np.diag(np.maximum(f, floor) / n_events)


def qdt(f_mat, r_mat, rel_tol=None, r_pinv=None):
    """Detector tomography: estimated design matrix ``F R^+``."""
    f_mat = np.asarray(f_mat, dtype=np.float64)
    r_mat = np.asarray(r_mat, dtype=np.float64)
    if f_mat.shape[1] != r_mat.shape[1]:
        raise InvalidInputError(f"pattern matrix has {f_mat.shape[1]} probes, probe matrix {r_mat.shape[1]}")
    if r_pinv is None:
        r_pinv = pseudoinverse(r_mat, rel_tol)
    return f_mat @ r_pinv


def dqst_estimate(f_mat, r_mat, f, rel_tol=None, r_pinv=None, cov=None):
    """Two-step estimate: QDT, then least squares with the fitted detector.

    ``cov=None`` gives the OLS form ``(F R^+)^+ f``; a covariance switches
    the second step to GLS.
    """
    a_s = qdt(f_mat, r_mat, rel_tol, r_pinv)
    if cov is None:
        return ols(a_s, f, rel_tol)
    return gls(a_s, f, cov, rel_tol)


def dpt_coefficients(f_mat, f, rel_tol=None, f_pinv=None):
    """Minimum-norm least-squares fit ``F^+ f`` of the data by the patterns."""
    f_mat = np.asarray(f_mat, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if f_mat.shape[0] != f.shape[0]:
        raise InvalidInputError(f"patterns have {f_mat.shape[0]} outcomes but data has length {f.shape[0]}")
    if f_pinv is None:
        f_pinv = pseudoinverse(f_mat, rel_tol)
    return f_pinv @ f


def dpt_estimate(r_mat, f_mat, f, rel_tol=None, f_pinv=None):
    """Data-pattern estimate ``R F^+ f``."""
    r_mat = np.asarray(r_mat, dtype=np.float64)
    if r_mat.shape[1] != np.shape(f_mat)[1]:
        raise InvalidInputError("probe and pattern matrices disagree on the probe count")
    return r_mat @ dpt_coefficients(f_mat, f, rel_tol, f_pinv)


def effective_dpt_design(r_mat, f_mat, rel_tol=None, f_pinv=None):
    """Effective measurement matrix ``(R F^+)^+`` implied by DPT."""
    r_mat = np.asarray(r_mat, dtype=np.float64)
    if f_pinv is None:
        f_pinv = pseudoinverse(np.asarray(f_mat, dtype=np.float64), rel_tol)
    return pseudoinverse(r_mat @ f_pinv, rel_tol)


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Fisher information ``n_events * per_event`` on the traceless coordinates."""

    per_event: np.ndarray
    n_events: float

    @property
    def matrix(self):
        return self.n_events * self.per_event

    @property
    def n(self):
        return self.per_event.shape[0]


def fisher_matrix(a, p, n_events, p_floor=P_FLOOR):
    """Product-Poisson Fisher information ``N A_t^T diag(1/p) A_t``.

    ``A_t`` are the traceless columns of the design matrix; the trace
    coordinate is fixed by normalization and carries no information.
    """
    a = _as_matrix(a)
    p = np.asarray(p, dtype=np.float64)
    if a.shape[0] != p.shape[0]:
        raise InvalidInputError("probability vector length does not match the design matrix")
    if n_events <= 0:
        raise InvalidInputError("n_events must be positive")
    if np.any(p <= p_floor):
        j = int(np.argmin(p))
        raise SingularStatisticsError(f"outcome {j} has probability {p[j]:.3e} <= {p_floor:g}")
    at = a[:, 1:]
    per_event = at.T @ (at / p[:, None])
    per_event = 0.5 * (per_event + per_event.T)
    return FisherMatrix(per_event, n_events)


def crlb(fisher, rel_tol=None):
    """``Tr(F^-1)``; refuses singular Fisher matrices instead of pseudoinverting."""
    if isinstance(fisher, FisherMatrix):
        unit, n_events = fisher.per_event, fisher.n_events
    else:
        unit, n_events = np.asarray(fisher, dtype=np.float64), 1.0
    w = np.linalg.eigvalsh(0.5 * (unit + unit.T))
    if rel_tol is None:
        rel_tol = default_rel_tol(unit.shape)
    if w[-1] <= 0 or w[0] <= rel_tol * w[-1]:
        raise InformationallyIncompleteError(
            f"Fisher matrix is singular (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})"
        )
    return float(np.trace(np.linalg.inv(unit))) / n_events


def squared_error(r_hat, r_true):
    """Squared Hilbert-Schmidt distance on the traceless coordinates."""
    diff = np.asarray(r_hat)[1:] - np.asarray(r_true)[1:]
    return float(diff @ diff)
