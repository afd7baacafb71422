import itertools

import numpy as np
import pytest

from tomobench.errors import InvalidInputError, SamplingExhaustedError
from tomobench.estimators import design_matrix
from tomobench.quantum import born_matrix, gell_mann_basis, haar_kets, random_state, square_root_povm
from tomobench.simulation import (
    MonteCarloConfig,
    Purpose,
    RngStream,
    TrialOutcome,
    aggregate,
    generate_patterns,
    generate_probe_set,
    inverse_condition,
    mean_and_se,
    monte_carlo,
    prepare_setup,
    run_trial,
    sample_measurement_with_condition,
    sample_poisson_frequencies,
)


def small_setup(seed=0, d=3, m=12, n_probes=30):
    rng = np.random.default_rng(seed)
    basis = gell_mann_basis(d)
    povm = square_root_povm(haar_kets(d, m, rng))
    r_mat, states = generate_probe_set(d, n_probes, 0.0, rng, basis)
    return prepare_setup(povm, random_state(d, 0.1, rng), r_mat, states, basis)


def test_rng_stream_is_keyed():
    a = RngStream(7).child(Purpose.TRIAL, 3).generator().random(4)
    b = RngStream(7).child(Purpose.TRIAL, 3).generator().random(4)
    c = RngStream(7).child(Purpose.TRIAL, 4).generator().random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_poisson_zero_rate_outcome_never_fires(rng):
    f = sample_poisson_frequencies(np.array([1.0, 0.0]), 200, rng)
    assert f[1] == 0.0 and f[0] > 0


def test_poisson_law_of_large_numbers(rng):
    p = np.array([0.1, 0.2, 0.3, 0.4])
    n = 10**6
    f = sample_poisson_frequencies(p, n, rng)
    assert np.abs(f - p).max() <= 5 * np.sqrt(p.max() / n)


def test_poisson_moments():
    # oracle: Poisson moments; f_j = K/N with K ~ Poisson(N p_j)
    rng = np.random.default_rng(8)
    p = np.array([0.2, 0.3, 0.5])
    n, draws = 100, 100_000
    f = np.array([sample_poisson_frequencies(p, n, rng) for _ in range(draws)])
    lam = n * p
    mean_se = np.sqrt(p / n / draws)
    # Var of the sample variance of K: (mu4 - sigma^4)/draws, mu4 = lam(1 + 3 lam)
    var_se = np.sqrt((lam * (1 + 3 * lam) - lam**2) / draws) / n**2
    assert np.all(np.abs(f.mean(axis=0) - p) <= 3 * mean_se)
    assert np.all(np.abs(f.var(axis=0, ddof=1) - p / n) <= 3 * var_se)


def test_poisson_rejects_unnormalized(rng):
    with pytest.raises(InvalidInputError):
        sample_poisson_frequencies(np.array([0.5, 0.6]), 10, rng)


def test_probe_set_full_rank_and_deterministic():
    basis = gell_mann_basis(4)
    r1, states = generate_probe_set(4, 16, 0.0, np.random.default_rng(1), basis)
    r2, _ = generate_probe_set(4, 16, 0.0, np.random.default_rng(1), basis)
    np.testing.assert_array_equal(r1, r2)
    assert np.linalg.matrix_rank(r1[1:]) == 15
    np.testing.assert_allclose(r1[0], 0.5, atol=1e-12)
    assert states.shape == (16, 4, 4)


def test_probe_set_fully_depolarized(rng):
    r_mat, _ = generate_probe_set(3, 10, 1.0, rng)
    np.testing.assert_allclose(r_mat[1:], 0, atol=1e-15)


def test_patterns_noiseless_limit(rng):
    setup = small_setup()
    f_mat = generate_patterns(setup.povm, None, 10**8, rng, probs=setup.probe_probs)
    np.testing.assert_allclose(f_mat, setup.design.full @ setup.r_mat, atol=1e-3)


def test_patterns_mean_matches_born_probabilities():
    rng = np.random.default_rng(4)
    basis = gell_mann_basis(2)
    povm = square_root_povm(haar_kets(2, 3, rng))
    _, states = generate_probe_set(2, 4, 0.0, rng, basis)
    n_events, reps = 200, 1000
    stack = np.array([generate_patterns(povm, states, n_events, rng) for _ in range(reps)])
    probs = born_matrix(povm, states)
    se = np.sqrt(probs / n_events / reps)
    assert np.all(np.abs(stack.mean(axis=0) - probs) <= 3 * se)


def test_trial_noiseless_regime():
    setup = small_setup()
    out = run_trial(setup, 10**9, np.random.default_rng(0))
    assert out.squared_error_dqst < 1e-6 and out.squared_error_dpt < 1e-6
    assert out.fidelity_dqst > 0.999 and out.fidelity_dpt > 0.999


def test_trial_square_probe_set_identical_errors():
    setup = small_setup(seed=3, d=3, m=12, n_probes=9)
    out = run_trial(setup, 1000, np.random.default_rng(1))
    assert abs(out.squared_error_dqst - out.squared_error_dpt) <= 1e-10


def test_trial_gls_option_runs():
    setup = small_setup()
    out = run_trial(setup, 1000, np.random.default_rng(2), estimator="gls", keep_design=True)
    assert out.squared_error_dqst >= 0
    assert out.estimated_design_dpt.shape == setup.design.full.shape


def _outcomes(n):
    rng = np.random.default_rng(n)
    return [TrialOutcome(i, *rng.random(4)) for i in range(n)]


def test_aggregate_order_independent():
    outs = _outcomes(30)
    a = aggregate(outs)
    b = aggregate(list(reversed(outs)))
    c = aggregate([outs[i] for i in np.random.default_rng(1).permutation(30)])
    assert a == b == c


def test_aggregate_identical_trials_zero_se():
    outs = [TrialOutcome(i, 0.3, 0.2, 0.9, 0.8) for i in range(2)]
    agg = aggregate(outs)
    assert agg.se_mse_dqst == 0.0 and agg.se_fid_dpt == 0.0


def test_mean_and_se():
    mean, se = mean_and_se([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


def test_monte_carlo_reports_crlb_and_bias():
    setup = small_setup()
    cfg = MonteCarloConfig(setup, 2000, RngStream(3), keep_design=True, n_boot=50)
    agg = monte_carlo(cfg, 40)
    assert agg.trials == 40 and agg.trials_failed == 0
    assert agg.crlb_value == pytest.approx(setup.crlb(2000))
    assert agg.bias_frobenius > 0 and agg.bias_se > 0
    with pytest.raises(InvalidInputError):
        monte_carlo(cfg, 1)


def test_monte_carlo_independent_of_worker_count():
    from concurrent.futures import ProcessPoolExecutor

    cfg = MonteCarloConfig(small_setup(), 500, RngStream(9), keep_design=True, n_boot=20)
    serial = monte_carlo(cfg, 12)
    with ProcessPoolExecutor(max_workers=2) as pool:
        parallel = monte_carlo(cfg, 12, pool)
    assert serial == parallel


def test_conditioned_sampling_window_and_degenerate_window():
    rng = np.random.default_rng(6)
    povm, design, attempts = sample_measurement_with_condition(6, 40, 0.05, 0.01, 5000, rng)
    assert abs(inverse_condition(design) - 0.05) <= 0.01
    _, _, attempts = sample_measurement_with_condition(6, 40, 0.5, 1.0, 10, rng)
    assert attempts == 1


def test_conditioned_sampling_exhausted():
    with pytest.raises(SamplingExhaustedError) as info:
        sample_measurement_with_condition(6, 40, 0.9, 0.001, 20, np.random.default_rng(0))
    assert info.value.attempts == 20
    lo, hi = info.value.observed_range
    assert 0 < lo <= hi < 0.9


def test_conditioned_sampling_acceptance_follows_histogram():
    # oracle: acceptance probability estimated from unconditioned 1/kappa draws
    rng = np.random.default_rng(12)
    basis = gell_mann_basis(6)
    ic = np.array([inverse_condition(design_matrix(square_root_povm(haar_kets(6, 40, rng)), basis)) for _ in range(2000)])
    window = 0.005
    mode_target = float(np.median(ic))
    tail_target = float(np.quantile(ic, 0.02))
    p_mode = np.mean(np.abs(ic - mode_target) <= window)
    p_tail = np.mean(np.abs(ic - tail_target) <= window)
    assert p_mode > p_tail

    def mean_attempts(target):
        return np.mean([sample_measurement_with_condition(6, 40, target, window, 5000, rng)[2] for _ in range(15)])

    assert mean_attempts(mode_target) < mean_attempts(tail_target)
