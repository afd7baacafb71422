import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tomobench.errors import InvalidInputError
from tomobench.matlin import (
    condition_number,
    frobenius_norm,
    inv_sqrt_psd,
    pseudoinverse,
    trace_norm,
)
from tomobench.quantum import haar_kets

# integer entries produce exact rank deficiencies without near-cutoff spectra
entries = st.integers(-5, 5).map(float)
matrices = st.tuples(st.integers(1, 7), st.integers(1, 7)).flatmap(lambda s: arrays(np.float64, s, elements=entries))


def retained_condition(m):
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 1.0
    kept = s[s >= max(m.shape) * np.finfo(float).eps * s[0]]
    return kept[0] / kept[-1]


def penrose_residuals(m, p):
    return (
        frobenius_norm(m @ p @ m - m),
        frobenius_norm(p @ m @ p - p),
        frobenius_norm((m @ p).conj().T - m @ p),
        frobenius_norm((p @ m).conj().T - p @ m),
    )


def test_pinv_identity():
    np.testing.assert_array_equal(pseudoinverse(np.eye(3), 1e-12), np.eye(3))


def test_pinv_rank_deficient_diagonal():
    np.testing.assert_allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_full_column_rank_penrose(rng):
    m = rng.standard_normal((5, 3))
    assert max(penrose_residuals(m, pseudoinverse(m))) < 1e-9


def test_pinv_complex_uses_conjugate_transpose(rng):
    m = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    p = pseudoinverse(m)
    assert max(penrose_residuals(m, p)) < 1e-9
    np.testing.assert_allclose(p, np.linalg.pinv(m), atol=1e-12)


def test_pinv_cutoff_is_relative():
    m = np.diag([1.0, 1e-6])
    assert pseudoinverse(m, rel_tol=1e-5)[1, 1] == 0.0
    assert pseudoinverse(m, rel_tol=1e-7)[1, 1] == pytest.approx(1e6)


@pytest.mark.parametrize("bad", [np.array([[np.nan, 1.0]]), np.array([[np.inf]]), np.zeros((0, 2))])
def test_pinv_rejects_bad_input(bad):
    with pytest.raises(InvalidInputError):
        pseudoinverse(bad)


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_penrose_conditions_hold(m):
    assume(retained_condition(m) <= 1e6)
    p = pseudoinverse(m)
    scale = max(1.0, frobenius_norm(m))
    r1, r2, r3, r4 = penrose_residuals(m, p)
    assert r1 <= 1e-9 * scale
    assert r2 <= 1e-9 * max(1.0, frobenius_norm(p)) * scale
    assert r3 <= 1e-9 * scale and r4 <= 1e-9 * scale


def test_double_pinv_and_left_inverse(rng):
    m = rng.standard_normal((6, 4))
    np.testing.assert_allclose(pseudoinverse(pseudoinverse(m)), m, atol=1e-8)
    sq = rng.standard_normal((5, 5))
    np.testing.assert_allclose(pseudoinverse(sq) @ sq, np.eye(5), atol=1e-9)


def test_condition_number_examples():
    assert condition_number(np.eye(4)) == 1.0
    assert condition_number(np.diag([4.0, 2.0])) == 2.0
    assert condition_number(np.diag([1.0, 0.0])) == float("inf")
    with pytest.raises(InvalidInputError):
        condition_number(np.zeros((2, 2)))


def test_condition_number_matches_gram_eigenvalues(d6_setup):
    from tomobench.estimators import design_matrix

    basis, povm, _ = d6_setup
    a = design_matrix(povm, basis).full
    w = np.linalg.eigvalsh(a.T @ a)  # oracle: kappa(A) = sqrt(kappa(A^T A))
    assert condition_number(a) == pytest.approx(np.sqrt(w[-1] / w[0]), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(matrices)
def test_condition_number_at_least_one(m):
    if frobenius_norm(m) == 0:
        return
    assert condition_number(m) >= 1.0


def test_inv_sqrt_psd_examples():
    np.testing.assert_allclose(inv_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(inv_sqrt_psd(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]), atol=1e-15)


def test_inv_sqrt_psd_gram_support_projector(rng):
    phi = haar_kets(6, 40, rng)
    g = phi.T @ phi.conj()
    x = inv_sqrt_psd(g)
    np.testing.assert_allclose(x @ g @ x, np.eye(6), atol=1e-9)
    np.testing.assert_allclose(x @ x @ g, np.eye(6), atol=1e-9)


def test_inv_sqrt_psd_singular_support(rng):
    v = haar_kets(3, 2, rng)
    h = v.T @ v.conj()  # rank 2 in d=3
    x = inv_sqrt_psd(h, rel_tol=1e-10)
    proj = x @ h @ x
    np.testing.assert_allclose(proj @ proj, proj, atol=1e-9)
    assert np.trace(proj).real == pytest.approx(2.0)


def test_inv_sqrt_psd_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        inv_sqrt_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        inv_sqrt_psd(np.diag([1.0, -0.5]))


def test_norms():
    assert frobenius_norm(np.zeros((3, 3))) == 0.0
    assert frobenius_norm(np.eye(5)) == pytest.approx(np.sqrt(5))
    assert frobenius_norm(np.array([[3.0, 4.0], [0.0, 0.0]])) == 5.0
    assert trace_norm(np.diag([3.0, -4.0])) == pytest.approx(7.0)
