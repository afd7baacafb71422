"""Synthetic Poisson data, single tomography trials and Monte Carlo runs.

Randomness is keyed, never shared: every consumer derives its own
``numpy.random.Generator`` from ``(master_seed, *key)`` through
``SeedSequence.spawn_key``.  A trial's stream depends only on its key, so
results do not change with the number of worker processes or with the
order in which trials finish.
"""
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    DegenerateMeasurementError,
    InvalidInputError,
    SamplingExhaustedError,
    TomoError,
    TrialFailure,
)
from .estimators import (
    DesignMatrix,
    crlb,
    design_matrix,
    dpt_estimate,
    dqst_estimate,
    effective_dpt_design,
    fisher_matrix,
    poisson_covariance,
    squared_error,
)
from .matlin import frobenius_norm, pseudoinverse, singular_values, sqrt_psd, trace_norm
from .quantum import (
    GeneratorBasis,
    Povm,
    bloch_coords,
    born_matrix,
    check_density_matrix,
    depolarize,
    fidelity_with_sqrt,
    gell_mann_basis,
    haar_kets,
    project_to_physical,
    square_root_povm,
    state_from_bloch,
)

MAX_FAILURE_FRACTION = 0.01


class Purpose(IntEnum):
    """Tags separating independent random streams under one master seed."""

    MEASUREMENT = 1
    TRUE_STATE = 2
    PROBES = 3
    TRIAL = 4
    BOOTSTRAP = 5
    PREPASS = 6
    CONDITIONED = 7
    SELFTEST = 8


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by a seed and an integer key."""

    master_seed: int
    key: tuple = ()

    def child(self, *key):
        return RngStream(self.master_seed, self.key + tuple(int(k) for k in key))

    def generator(self):
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(seq))


def sample_poisson_frequencies(p, n_events, rng):
    """Independent counts ``N_j ~ Poisson(N p_j)``, returned as ``N_j / N``."""
    p = np.asarray(p, dtype=np.float64)
    if n_events < 1:
        raise InvalidInputError("n_events must be >= 1")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-8:
        raise InvalidInputError("p must be a normalized probability vector")
    return rng.poisson(n_events * p) / n_events


def generate_probe_set(d, n_probes, admixture, rng, basis=None):
    """Haar-random probes with optional depolarization.

    Returns the d**2 x M probe (Bloch) matrix and the (M, d, d) states.
    """
    if n_probes < 1:
        raise InvalidInputError("need at least one probe")
    basis = basis or gell_mann_basis(d)
    kets = haar_kets(d, n_probes, rng)
    states = np.einsum("na,nb->nab", kets, kets.conj())
    if admixture:
        states = np.array([depolarize(s, admixture) for s in states])
    r_mat = bloch_coords(states, basis).T.copy()
    return r_mat, states


def generate_patterns(povm, probes, n_events_per_probe, rng, probs=None):
    """Pattern matrix: column alpha holds Poisson frequencies for probe alpha."""
    if probs is None:
        probs = born_matrix(povm, probes)
    if n_events_per_probe < 1:
        raise InvalidInputError("n_events_per_probe must be >= 1")
    return rng.poisson(n_events_per_probe * probs) / n_events_per_probe


def inverse_condition(a):
    """s_min / s_max of a design matrix's traceless columns (0 if singular)."""
    mat = a.traceless if isinstance(a, DesignMatrix) else np.asarray(a)
    s = singular_values(mat)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


@dataclass(frozen=True, eq=False)
class TrialSetup:
    """Everything fixed across repetitions: apparatus, signal and probes."""

    povm: Povm
    design: DesignMatrix
    true_state: np.ndarray
    r_true: np.ndarray
    p_true: np.ndarray
    r_mat: np.ndarray
    r_pinv: np.ndarray
    probe_probs: np.ndarray
    sqrt_true: np.ndarray
    basis: GeneratorBasis

    @property
    def d(self):
        return self.basis.dim

    @property
    def n_probes(self):
        return self.r_mat.shape[1]

    def crlb(self, n_events):
        return crlb(fisher_matrix(self.design, self.p_true, n_events))


def prepare_setup(povm, true_state, r_mat, probe_states, basis=None):
    basis = basis or gell_mann_basis(povm.dim)
    rho = check_density_matrix(true_state)
    design = design_matrix(povm, basis)
    r_true = bloch_coords(rho, basis)[0]
    p_true = np.clip(design.full @ r_true, 0.0, None)
    p_true = p_true / p_true.sum()
    r_mat = np.asarray(r_mat, dtype=np.float64)
    return TrialSetup(
        povm=povm,
        design=design,
        true_state=rho,
        r_true=r_true,
        p_true=p_true,
        r_mat=r_mat,
        r_pinv=pseudoinverse(r_mat),
        probe_probs=born_matrix(povm, probe_states),
        sqrt_true=sqrt_psd(rho),
        basis=basis,
    )


def restrict_probes(setup, n_probes):
    """Same setup using only the first ``n_probes`` probes."""
    if n_probes == setup.n_probes:
        return setup
    r_mat = setup.r_mat[:, :n_probes]
    return TrialSetup(
        povm=setup.povm,
        design=setup.design,
        true_state=setup.true_state,
        r_true=setup.r_true,
        p_true=setup.p_true,
        r_mat=r_mat,
        r_pinv=pseudoinverse(r_mat),
        probe_probs=setup.probe_probs[:, :n_probes],
        sqrt_true=setup.sqrt_true,
        basis=setup.basis,
    )


@dataclass
class TrialOutcome:
    index: int
    squared_error_dqst: float
    squared_error_dpt: float
    fidelity_dqst: float
    fidelity_dpt: float
    estimated_design_dpt: np.ndarray = None
    crlb: float = float("nan")


def _estimate_fidelity(setup, r_hat, root):
    coords = np.array(r_hat, dtype=np.float64)
    coords[0] = 1.0 / np.sqrt(setup.d)
    sigma = project_to_physical(state_from_bloch(coords, setup.basis))
    return fidelity_with_sqrt(setup.sqrt_true, sigma, root=root)


def run_trial(
    setup,
    n_events,
    rng,
    n_events_patterns=None,
    estimator="ols",
    keep_design=False,
    fidelity_root=True,
    index=0,
):
    """One data acquisition: fresh patterns and signal data, both estimators."""
    n_pat = n_events if n_events_patterns is None else n_events_patterns
    f_mat = generate_patterns(setup.povm, None, n_pat, rng, probs=setup.probe_probs)
    f = sample_poisson_frequencies(setup.p_true, n_events, rng)

    cov = poisson_covariance(f, n_events) if estimator == "gls" else None
    r_s = dqst_estimate(f_mat, setup.r_mat, f, r_pinv=setup.r_pinv, cov=cov)
    f_pinv = pseudoinverse(f_mat)
    r_p = dpt_estimate(setup.r_mat, f_mat, f, f_pinv=f_pinv)

    return TrialOutcome(
        index=index,
        squared_error_dqst=squared_error(r_s, setup.r_true),
        squared_error_dpt=squared_error(r_p, setup.r_true),
        fidelity_dqst=_estimate_fidelity(setup, r_s, fidelity_root),
        fidelity_dpt=_estimate_fidelity(setup, r_p, fidelity_root),
        estimated_design_dpt=effective_dpt_design(setup.r_mat, f_mat, f_pinv=f_pinv) if keep_design else None,
    )


@dataclass
class AggregateResult:
    trials: int
    trials_failed: int
    mean_mse_dqst: float
    se_mse_dqst: float
    mean_mse_dpt: float
    se_mse_dpt: float
    mean_fid_dqst: float
    se_fid_dqst: float
    mean_fid_dpt: float
    se_fid_dpt: float
    crlb_value: float = float("nan")
    bias_frobenius: float = float("nan")
    bias_trace: float = float("nan")
    bias_se: float = float("nan")
    notes: list = field(default_factory=list)


def mean_and_se(values):
    """Order-independent mean and standard error (sample std / sqrt(n))."""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, float("nan")
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def design_bias(designs, true_design, norm="frobenius"):
    diff = designs.mean(axis=0) - true_design
    return frobenius_norm(diff) if norm == "frobenius" else trace_norm(diff)


def bootstrap_bias_se(designs, true_design, n_boot, rng):
    """Bootstrap standard error of the Frobenius bias of mean(designs)."""
    n = designs.shape[0]
    flat = designs.reshape(n, -1)
    idx = rng.integers(0, n, size=(n_boot, n))
    weights = np.stack([np.bincount(row, minlength=n) for row in idx]) / n
    means = weights @ flat
    biases = np.sqrt(((means - true_design.ravel()) ** 2).sum(axis=1))
    return float(np.std(biases, ddof=1))


def aggregate(outcomes, trials_failed=0, true_design=None, crlb_value=float("nan"), n_boot=0, boot_stream=None):
    """Reduce trial outcomes; sorting by trial index makes it order-independent."""
    outcomes = sorted(outcomes, key=lambda o: o.index)
    if not outcomes:
        raise InvalidInputError("no successful trials to aggregate")
    stats = {}
    for name in ("squared_error_dqst", "squared_error_dpt", "fidelity_dqst", "fidelity_dpt"):
        stats[name] = mean_and_se([getattr(o, name) for o in outcomes])
    result = AggregateResult(
        trials=len(outcomes),
        trials_failed=trials_failed,
        mean_mse_dqst=stats["squared_error_dqst"][0],
        se_mse_dqst=stats["squared_error_dqst"][1],
        mean_mse_dpt=stats["squared_error_dpt"][0],
        se_mse_dpt=stats["squared_error_dpt"][1],
        mean_fid_dqst=stats["fidelity_dqst"][0],
        se_fid_dqst=stats["fidelity_dqst"][1],
        mean_fid_dpt=stats["fidelity_dpt"][0],
        se_fid_dpt=stats["fidelity_dpt"][1],
        crlb_value=crlb_value,
    )
    if true_design is not None and outcomes[0].estimated_design_dpt is not None:
        designs = np.stack([o.estimated_design_dpt for o in outcomes])
        result.bias_frobenius = design_bias(designs, true_design)
        result.bias_trace = design_bias(designs, true_design, norm="trace")
        if n_boot and boot_stream is not None:
            result.bias_se = bootstrap_bias_se(designs, true_design, n_boot, boot_stream.generator())
    return result


@dataclass(frozen=True, eq=False)
class MonteCarloConfig:
    """One sweep point: a fixed setup repeated under independent noise."""

    setup: TrialSetup
    n_events: int
    stream: RngStream
    n_events_patterns: int = None
    estimator: str = "ols"
    keep_design: bool = False
    fidelity_root: bool = True
    n_boot: int = 200


def _run_trials(config, indices):
    outcomes, failures = [], []
    for t in indices:
        rng = config.stream.child(Purpose.TRIAL, t).generator()
        try:
            outcomes.append(
                run_trial(
                    config.setup,
                    config.n_events,
                    rng,
                    n_events_patterns=config.n_events_patterns,
                    estimator=config.estimator,
                    keep_design=config.keep_design,
                    fidelity_root=config.fidelity_root,
                    index=t,
                )
            )
        except TomoError as exc:
            failures.append(TrialFailure(t, exc))
    return outcomes, failures


def chunked(indices, n_chunks):
    n_chunks = max(1, min(n_chunks, len(indices)))
    return [indices[i::n_chunks] for i in range(n_chunks)]


def map_tasks(fn, arg_chunks, executor=None):
    """Apply ``fn`` to each argument tuple, in a pool when one is supplied."""
    if executor is None:
        return [fn(*args) for args in arg_chunks]
    futures = [executor.submit(fn, *args) for args in arg_chunks]
    return [f.result() for f in futures]


def worker_count(executor):
    if executor is None:
        return 1
    return getattr(executor, "_max_workers", 1)


def monte_carlo(config: MonteCarloConfig, trials: int, executor: Executor = None) -> AggregateResult:
    """Run ``trials`` independent trials and aggregate them.

    Failed trials are dropped and counted; more than 1% failures aborts
    with the first failure attached.
    """
    if trials < 2:
        raise InvalidInputError("monte_carlo needs at least 2 trials")
    chunks = chunked(list(range(trials)), 4 * worker_count(executor))
    parts = map_tasks(_run_trials, [(config, c) for c in chunks], executor)
    outcomes = [o for part in parts for o in part[0]]
    failures = sorted((f for part in parts for f in part[1]), key=lambda f: f.trial_index)
    if len(failures) > MAX_FAILURE_FRACTION * trials:
        raise failures[0]
    setup = config.setup
    result = aggregate(
        outcomes,
        trials_failed=len(failures),
        true_design=setup.design.full if config.keep_design else None,
        crlb_value=setup.crlb(config.n_events),
        n_boot=config.n_boot,
        boot_stream=config.stream.child(Purpose.BOOTSTRAP),
    )
    result.notes.extend(str(f) for f in failures)
    return result


def sample_measurement_with_condition(d, m, target_inv_cond, window=0.001, max_attempts=20000, rng=None, basis=None):
    """Rejection-sample a square-root POVM whose design matrix has
    ``|1/kappa - target| <= window`` (kappa over the traceless columns).

    Returns ``(povm, design, attempts)``.
    """
    if not 0.0 < target_inv_cond < 1.0:
        raise InvalidInputError("target inverse condition number must lie in (0, 1)")
    if window <= 0:
        raise InvalidInputError("window must be positive")
    basis = basis or gell_mann_basis(d)
    lo, hi = float("inf"), float("-inf")
    for attempt in range(1, max_attempts + 1):
        try:
            povm = square_root_povm(haar_kets(d, m, rng))
        except DegenerateMeasurementError:
            continue
        design = design_matrix(povm, basis)
        ic = inverse_condition(design)
        lo, hi = min(lo, ic), max(hi, ic)
        if abs(ic - target_inv_cond) <= window:
            return povm, design, attempt
    raise SamplingExhaustedError(
        f"no measurement with 1/kappa within {window:g} of {target_inv_cond:g} after "
        f"{max_attempts} attempts (observed range {lo:.4g}..{hi:.4g})",
        attempts=max_attempts,
        observed_range=(lo, hi),
    )
