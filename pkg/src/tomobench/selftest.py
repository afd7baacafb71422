"""Fast invariant checks run by ``tomobench selftest``."""
import time

import numpy as np

from .estimators import crlb, design_matrix, dpt_estimate, dqst_estimate, fisher_matrix
from .matlin import frobenius_norm, pseudoinverse
from .quantum import (
    bloch_from_state,
    born_probs,
    fidelity,
    gell_mann_basis,
    haar_kets,
    random_state,
    square_root_povm,
    state_from_bloch,
)
from .simulation import Purpose, RngStream, generate_patterns, generate_probe_set, sample_poisson_frequencies


def random_unitary(d, rng):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def square_probe_setup(d, rng, noisy=True, n_events=1000):
    """Probe/pattern pair with M = d**2 probes and full column ranks."""
    basis = gell_mann_basis(d)
    n_probes = d * d
    m = n_probes + int(rng.integers(0, 3))
    povm = square_root_povm(haar_kets(d, m, rng))
    r_mat, states = generate_probe_set(d, n_probes, 0.0, rng, basis)
    if noisy:
        f_mat = generate_patterns(povm, states, n_events, rng)
    else:
        f_mat = design_matrix(povm, basis).full @ r_mat
    rho = random_state(d, 0.1, rng)
    f = sample_poisson_frequencies(born_probs(rho, povm), n_events, rng)
    return r_mat, f_mat, f


def check_equivalence(rng, n_setups=100):
    worst = 0.0
    for i in range(n_setups):
        d = 2 + i % 2
        r_mat, f_mat, f = square_probe_setup(d, rng, noisy=bool(i % 4))
        if np.linalg.matrix_rank(f_mat) < f_mat.shape[1] or np.linalg.matrix_rank(r_mat) < r_mat.shape[1]:
            continue
        diff = dqst_estimate(f_mat, r_mat, f) - dpt_estimate(r_mat, f_mat, f)
        worst = max(worst, float(np.abs(diff).max()))
    return worst <= 1e-8, f"max |r_dqst - r_dpt| = {worst:.2e}"


def check_penrose(rng, n=50):
    worst = 0.0
    for _ in range(n):
        rows, cols = rng.integers(1, 12, size=2)
        a = rng.standard_normal((rows, cols))
        if rng.random() < 0.3 and min(rows, cols) > 1:
            a[:, -1] = a[:, 0]  # rank deficient
        p = pseudoinverse(a)
        scale = max(1.0, frobenius_norm(a))
        errs = (
            frobenius_norm(a @ p @ a - a) / scale,
            frobenius_norm(p @ a @ p - p) / max(1.0, frobenius_norm(p)),
            frobenius_norm((a @ p).T - a @ p),
            frobenius_norm((p @ a).T - p @ a),
        )
        worst = max(worst, *errs)
    return worst <= 1e-9, f"worst Penrose residual {worst:.2e}"


def check_povm(rng, n=100, d=6, m=40):
    worst_sum, worst_eig = 0.0, 0.0
    for _ in range(n):
        povm = square_root_povm(haar_kets(d, m, rng))
        worst_sum = max(worst_sum, float(np.abs(povm.elements.sum(axis=0) - np.eye(d)).max()))
        worst_eig = max(worst_eig, float(-np.linalg.eigvalsh(povm.elements).min()))
    ok = worst_sum <= 1e-10 and worst_eig <= 1e-10
    return ok, f"completeness {worst_sum:.2e}, min eigenvalue {-worst_eig:.2e}"


def check_bloch(rng, n=50):
    worst = 0.0
    for i in range(n):
        d = 2 + i % 5
        basis = gell_mann_basis(d)
        rho = random_state(d, float(rng.random()), rng)
        back = state_from_bloch(bloch_from_state(rho, basis), basis)
        worst = max(worst, float(np.abs(back - rho).max()))
    return worst <= 1e-12, f"round-trip error {worst:.2e}"


def check_fidelity(rng, n=50):
    worst = 0.0
    for i in range(n):
        d = 2 + i % 4
        rho, sigma = random_state(d, 0.2, rng), random_state(d, 0.5, rng)
        u = random_unitary(d, rng)
        f0 = fidelity(rho, sigma)
        f1 = fidelity(u @ rho @ u.conj().T, u @ sigma @ u.conj().T)
        worst = max(worst, abs(f0 - f1), abs(f0 - fidelity(sigma, rho)))
    return worst <= 1e-9, f"unitary/symmetry deviation {worst:.2e}"


def check_fisher(rng):
    basis = gell_mann_basis(6)
    povm = square_root_povm(haar_kets(6, 40, rng))
    a = design_matrix(povm, basis)
    p = born_probs(random_state(6, 0.1, rng), povm)
    f1, f2 = fisher_matrix(a, p, 1000), fisher_matrix(a, p, 2000)
    linear = np.array_equal(f2.matrix, 2 * f1.matrix)
    halves = crlb(f2) == crlb(f1) / 2
    return linear and halves, f"Fisher doubles exactly: {linear}; CRLB halves exactly: {halves}"


SUITES = (
    ("eq8-equivalence", check_equivalence),
    ("penrose-conditions", check_penrose),
    ("povm-completeness", check_povm),
    ("bloch-roundtrip", check_bloch),
    ("fidelity-invariance", check_fidelity),
    ("fisher-crlb-scaling", check_fisher),
)


def run_selftest(seed=0, echo=print):
    """Run every suite with its own stream; returns True iff all pass."""
    root = RngStream(seed).child(Purpose.SELFTEST)
    all_ok = True
    for i, (name, fn) in enumerate(SUITES):
        start = time.perf_counter()
        try:
            ok, detail = fn(root.child(i).generator())
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name:<22} {detail}  ({time.perf_counter() - start:.2f}s)")
    return all_ok
