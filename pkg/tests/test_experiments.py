import json
import math

import numpy as np
import pytest

from tomobench.errors import InvalidInputError
from tomobench.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    build_fixed_setup,
    execute,
    read_results,
    results_csv_text,
    run_experiment,
)
from tomobench.simulation import inverse_condition

SMALL = {"d": 3, "m": 12, "M_grid": [9, 20, 40], "N_grid": [500, 2000], "trials": 20, "bootstrap": 20}


def small(kind="fig1", **extra):
    return ExperimentConfig.defaults(kind).updated({**SMALL, **extra})


@pytest.fixture(scope="module")
def fig1_small():
    return run_experiment(small(), workers=1)


def test_defaults_per_kind():
    assert ExperimentConfig.defaults("fig1").N_grid == [500, 1000, 2000, 5000]
    assert ExperimentConfig.defaults("fig2").N_grid == [500, 1000, 3000]
    cfg = ExperimentConfig.defaults("fig3")
    assert cfg.M_grid == [1200] and cfg.N_grid == [1000]
    assert cfg.d == 6 and cfg.m == 40 and cfg.admixture_signal == 0.1


@pytest.mark.parametrize(
    "values",
    [{"trials": 1}, {"estimator": "mle"}, {"M_grid": []}, {"admixture_signal": 1.5}, {"bogus": 1}, {"master_seed": -1}],
)
def test_invalid_config_rejected(values):
    with pytest.raises(InvalidInputError):
        ExperimentConfig.defaults("fig1").updated(values)


def test_fig1_row_count_and_constant_crlb(fig1_small):
    assert len(fig1_small) == 2 * 3
    for n_events in SMALL["N_grid"]:
        rows = fig1_small.select(N=n_events)
        assert len({r.crlb for r in rows}) == 1
        assert all(r.trials_used == SMALL["trials"] for r in rows)
    crlb = {n: fig1_small.select(N=n)[0].crlb for n in SMALL["N_grid"]}
    assert crlb[500] == pytest.approx(4 * crlb[2000], rel=1e-12)
    for row in fig1_small.rows:
        assert all(math.isfinite(v) for v in row.as_tuple() if not isinstance(v, str))


def test_csv_round_trip(fig1_small, tmp_path):
    path = tmp_path / "results.csv"
    path.write_text(results_csv_text(fig1_small))
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_results(path)
    assert results_csv_text(back) == results_csv_text(fig1_small)
    for a, b in zip(back.rows, fig1_small.rows):
        for x, y in zip(a.as_tuple(), b.as_tuple()):
            if isinstance(y, float):
                assert x == pytest.approx(y, rel=1e-11)
            else:
                assert x == y


def test_meta_records_seed_and_rerun_is_identical(tmp_path):
    cfg = small(master_seed=987654321)
    execute(cfg, tmp_path / "a")
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["master_seed"] == 987654321
    for key in ("version", "timestamp", "elapsed_seconds"):
        assert key in meta
    execute(ExperimentConfig.from_dict(meta), tmp_path / "b", workers=2)
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_fig2_reuses_fig1_measurement():
    s1 = build_fixed_setup(small("fig1"))
    s2 = build_fixed_setup(small("fig2"))
    np.testing.assert_array_equal(s1.design.full, s2.design.full)
    np.testing.assert_array_equal(s1.true_state, s2.true_state)


def test_fig2_noiseless_bias_vanishes():
    # M = d**2: the pattern matrix keeps full column rank; what is left is
    # first-order pattern noise averaging out over trials
    table = run_experiment(small("fig2", M_grid=[9], N_grid=[10**9], trials=200))
    assert table.rows[0].bias_fro < 1e-4


def test_fig2_bias_plateau_beyond_m():
    # M > d**2: noise lifts the pattern rank from d**2 to m, so the effective
    # design stays offset however large N is
    table = run_experiment(small("fig2", M_grid=[40], N_grid=[10**5, 10**9], trials=40))
    lo, hi = (table.select(N=n)[0] for n in (10**5, 10**9))
    assert hi.bias_fro > 0.01
    assert hi.bias_fro == pytest.approx(lo.bias_fro, rel=0.2)


def test_fig2_bias_decreases_with_n():
    table = run_experiment(small("fig2", M_grid=[9], N_grid=[300, 30000], trials=60))
    low, high = (table.select(N=n)[0] for n in (300, 30000))
    assert low.bias_fro > 5 * high.bias_fro


def test_fig3_rows_and_window():
    cfg = small("fig3", M_grid=[30], N_grid=[1000], inv_cond_grid=[0.2, 0.3], window=0.02, trials=6, max_attempts=5000)
    table = run_experiment(cfg)
    assert [r.coord_value for r in table.rows] == [0.2, 0.3]
    assert all(r.trials_used == 6 and r.coord_name == "inv_cond" for r in table.rows)
    assert all(d["window"] == 0.02 for d in table.diagnostics)


def test_fig3_accepted_measurements_respect_window():
    from tomobench.quantum import gell_mann_basis
    from tomobench.simulation import sample_measurement_with_condition

    rng = np.random.default_rng(5)
    for target in (0.2, 0.3):
        _, design, _ = sample_measurement_with_condition(3, 12, target, 0.02, 5000, rng, gell_mann_basis(3))
        assert abs(inverse_condition(design) - target) <= 0.02


def test_fig3_unreachable_bin_is_marked_unavailable(tmp_path):
    cfg = small("fig3", M_grid=[30], N_grid=[1000], inv_cond_grid=[0.3, 0.97], window=0.05, trials=4, max_attempts=200)
    table = execute(cfg, tmp_path)
    bad = table.rows[1]
    assert bad.trials_used == 0 and math.isnan(bad.mse_dqst)
    assert "unavailable" in table.diagnostics[1]
    text = (tmp_path / "results.csv").read_text()
    assert text.count("\n") == 3
