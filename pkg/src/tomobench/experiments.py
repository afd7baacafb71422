"""Figure-level experiments, sweep execution and result files.

``fig1``  MSE of DQST and DPT versus probe count, one curve pair per N.
``fig2``  Bias of the DPT effective design matrix versus probe count.
``fig3``  MSE versus inverse condition number of the design matrix.
``custom`` behaves like fig1 with user-chosen grids.
"""
import csv
import dataclasses
import json
import math
import os
import subprocess
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .errors import DegenerateMeasurementError, InvalidInputError, SamplingExhaustedError
from .quantum import gell_mann_basis, haar_kets, random_state, square_root_povm
from .simulation import (
    MonteCarloConfig,
    Purpose,
    RngStream,
    TrialSetup,
    aggregate,
    chunked,
    generate_probe_set,
    inverse_condition,
    map_tasks,
    monte_carlo,
    prepare_setup,
    restrict_probes,
    run_trial,
    sample_measurement_with_condition,
    worker_count,
)
from .estimators import design_matrix

KINDS = ("fig1", "fig2", "fig3", "custom")
DESK_TRIALS = 300
FULL_SCALE_TRIALS = 1000
DEFAULT_M_GRID = [50, 100, 200, 400, 800, 1200]
DEFAULT_N_GRIDS = {
    "fig1": [500, 1000, 2000, 5000],
    "fig2": [500, 1000, 3000],
    "fig3": [1000],
    "custom": [1000],
}
PREPASS_DRAWS = 2000
META_ONLY_KEYS = ("version", "timestamp", "elapsed_seconds", "kernel_backend")

CSV_COLUMNS = (
    "sweep_kind",
    "coord_name",
    "coord_value",
    "N",
    "M",
    "mse_dqst",
    "mse_dqst_se",
    "mse_dpt",
    "mse_dpt_se",
    "crlb",
    "fid_dqst",
    "fid_dpt",
    "bias_fro",
    "trials_used",
)
_INT_COLUMNS = ("N", "M", "trials_used")
_STR_COLUMNS = ("sweep_kind", "coord_name")


@dataclass
class ExperimentConfig:
    kind: str = "fig1"
    d: int = 6
    m: int = 40
    M_grid: list = field(default_factory=lambda: list(DEFAULT_M_GRID))
    N_grid: list = field(default_factory=lambda: list(DEFAULT_N_GRIDS["fig1"]))
    trials: int = DESK_TRIALS
    admixture_signal: float = 0.1
    admixture_probes: float = 0.0
    estimator: str = "ols"
    master_seed: int = 20200
    n_events_patterns: int = None  # None: same budget as the signal
    fidelity: str = "root"
    bootstrap: int = 200
    inv_cond_grid: list = None  # fig3; None: derived from a pre-pass
    inv_cond_bins: int = 6
    window: float = 0.001
    max_attempts: int = 20000

    @classmethod
    def defaults(cls, kind):
        if kind not in KINDS:
            raise InvalidInputError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
        cfg = cls(kind=kind, N_grid=list(DEFAULT_N_GRIDS[kind]))
        if kind == "fig3":
            cfg.M_grid = [1200]
        return cfg

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def updated(self, values):
        """Copy with ``values`` applied; unknown keys are rejected."""
        unknown = sorted(set(values) - set(self.field_names()))
        if unknown:
            raise InvalidInputError(f"unknown configuration keys: {', '.join(unknown)}")
        cfg = dataclasses.replace(self, **values)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, data):
        """Build from a config/meta.json mapping (metadata keys ignored)."""
        data = {k: v for k, v in data.items() if k not in META_ONLY_KEYS}
        kind = data.get("kind", "fig1")
        return cls.defaults(kind).updated(data)

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown experiment kind {self.kind!r}")
        ints = {"d": 2, "m": 1, "trials": 2, "master_seed": 0, "bootstrap": 0, "inv_cond_bins": 1, "max_attempts": 1}
        for name, lo in ints.items():
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < lo:
                raise InvalidInputError(f"{name} must be an integer >= {lo}, got {value!r}")
        if self.master_seed >= 2**64:
            raise InvalidInputError("master_seed must fit in 64 bits")
        for name in ("M_grid", "N_grid"):
            grid = getattr(self, name)
            if not isinstance(grid, list) or not grid or not all(
                isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in grid
            ):
                raise InvalidInputError(f"{name} must be a nonempty list of positive integers")
        if self.n_events_patterns is not None and (
            not isinstance(self.n_events_patterns, int) or self.n_events_patterns < 1
        ):
            raise InvalidInputError("n_events_patterns must be a positive integer or null")
        for name in ("admixture_signal", "admixture_probes"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if self.estimator not in ("ols", "gls"):
            raise InvalidInputError("estimator must be 'ols' or 'gls'")
        if self.fidelity not in ("root", "squared"):
            raise InvalidInputError("fidelity must be 'root' or 'squared'")
        if not isinstance(self.window, (int, float)) or self.window <= 0:
            raise InvalidInputError("window must be positive")
        if self.inv_cond_grid is not None and (
            not isinstance(self.inv_cond_grid, list)
            or not all(isinstance(v, (int, float)) and 0 < v < 1 for v in self.inv_cond_grid)
        ):
            raise InvalidInputError("inv_cond_grid must be a list of values in (0, 1)")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class ResultRow:
    sweep_kind: str
    coord_name: str
    coord_value: float
    N: int
    M: int
    mse_dqst: float
    mse_dqst_se: float
    mse_dpt: float
    mse_dpt_se: float
    crlb: float
    fid_dqst: float
    fid_dpt: float
    bias_fro: float
    trials_used: int

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    # per-row extras that do not belong in results.csv
    diagnostics: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def select(self, **criteria):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]


def _row_from_aggregate(kind, coord_name, coord_value, n_events, n_probes, agg):
    return ResultRow(
        sweep_kind=kind,
        coord_name=coord_name,
        coord_value=float(coord_value),
        N=int(n_events),
        M=int(n_probes),
        mse_dqst=agg.mean_mse_dqst,
        mse_dqst_se=agg.se_mse_dqst,
        mse_dpt=agg.mean_mse_dpt,
        mse_dpt_se=agg.se_mse_dpt,
        crlb=agg.crlb_value,
        fid_dqst=agg.mean_fid_dqst,
        fid_dpt=agg.mean_fid_dpt,
        bias_fro=agg.bias_frobenius,
        trials_used=agg.trials,
    )


def _diagnostics(agg, **extra):
    out = {
        "fid_dqst_se": agg.se_fid_dqst,
        "fid_dpt_se": agg.se_fid_dpt,
        "bias_trace": agg.bias_trace,
        "bias_se": agg.bias_se,
        "trials_failed": agg.trials_failed,
        "failures": list(agg.notes),
    }
    out.update(extra)
    return out


def draw_measurement(d, m, stream, max_redraws=100):
    """Square-root POVM from Haar kets; redraws on a degenerate frame."""
    for attempt in range(max_redraws):
        try:
            return square_root_povm(haar_kets(d, m, stream.child(attempt).generator()))
        except DegenerateMeasurementError:
            continue
    raise DegenerateMeasurementError(f"{max_redraws} consecutive degenerate ket families")


def build_fixed_setup(config: ExperimentConfig) -> TrialSetup:
    """Measurement, true state and probe pool shared by fig1 and fig2.

    Probe sets are nested: a sweep point with M probes uses the first M of
    a pool of max(M_grid) probes.
    """
    basis = gell_mann_basis(config.d)
    root = RngStream(config.master_seed)
    povm = draw_measurement(config.d, config.m, root.child(Purpose.MEASUREMENT))
    rho = random_state(config.d, config.admixture_signal, root.child(Purpose.TRUE_STATE).generator())
    r_mat, states = generate_probe_set(
        config.d, max(config.M_grid), config.admixture_probes, root.child(Purpose.PROBES).generator(), basis
    )
    return prepare_setup(povm, rho, r_mat, states, basis)


def _mc_config(config, setup, n_events, n_probes, keep_design):
    return MonteCarloConfig(
        setup=restrict_probes(setup, n_probes),
        n_events=n_events,
        stream=RngStream(config.master_seed).child(Purpose.TRIAL, n_events, n_probes),
        n_events_patterns=config.n_events_patterns,
        estimator=config.estimator,
        keep_design=keep_design,
        fidelity_root=config.fidelity == "root",
        n_boot=config.bootstrap,
    )


def _probe_sweep(config, executor, keep_design):
    setup = build_fixed_setup(config)
    table = ResultTable()
    for n_events in config.N_grid:
        for n_probes in config.M_grid:
            agg = monte_carlo(_mc_config(config, setup, n_events, n_probes, keep_design), config.trials, executor)
            table.rows.append(_row_from_aggregate(config.kind, "M", n_probes, n_events, n_probes, agg))
            table.diagnostics.append(_diagnostics(agg, inv_cond=inverse_condition(setup.design)))
    return table


def run_fig1(config: ExperimentConfig, executor=None) -> ResultTable:
    """MSE of both strategies versus probe count, one block of rows per N."""
    return _probe_sweep(config, executor, keep_design=True)


def run_fig2(config: ExperimentConfig, executor=None) -> ResultTable:
    """Bias of mean((R F^+)^+) against the true design versus probe count.

    Uses the same seed-derived measurement as fig1.
    """
    return _probe_sweep(config, executor, keep_design=True)


def inverse_condition_prepass(config, n_draws=PREPASS_DRAWS):
    """1/kappa of ``n_draws`` unconditioned square-root measurements."""
    basis = gell_mann_basis(config.d)
    rng = RngStream(config.master_seed).child(Purpose.PREPASS).generator()
    values = []
    while len(values) < n_draws:
        try:
            povm = square_root_povm(haar_kets(config.d, config.m, rng))
        except DegenerateMeasurementError:
            continue
        values.append(inverse_condition(design_matrix(povm, basis)))
    return np.array(values)


def default_inv_cond_grid(config, n_draws=PREPASS_DRAWS):
    """``inv_cond_bins`` targets spanning the 5%..95% quantiles of a pre-pass."""
    values = inverse_condition_prepass(config, n_draws)
    lo, hi = np.quantile(values, [0.05, 0.95])
    return [round(float(v), 6) for v in np.linspace(lo, hi, config.inv_cond_bins)]


def _fig3_task(config, probe_r, probe_states, bin_index, target, indices):
    basis = gell_mann_basis(config.d)
    root = RngStream(config.master_seed).child(Purpose.CONDITIONED, bin_index)
    outcomes, attempts = [], []
    for j in indices:
        stream = root.child(j)
        povm, _, n_try = sample_measurement_with_condition(
            config.d, config.m, target, config.window, config.max_attempts, stream.child(Purpose.MEASUREMENT).generator(), basis
        )
        rho = random_state(config.d, config.admixture_signal, stream.child(Purpose.TRUE_STATE).generator())
        setup = prepare_setup(povm, rho, probe_r, probe_states, basis)
        n_events = config.N_grid[0]
        outcome = run_trial(
            setup,
            n_events,
            stream.child(Purpose.TRIAL).generator(),
            n_events_patterns=config.n_events_patterns,
            estimator=config.estimator,
            fidelity_root=config.fidelity == "root",
            index=j,
        )
        outcome.crlb = setup.crlb(n_events)
        outcomes.append(outcome)
        attempts.append(n_try)
    return outcomes, attempts


def run_fig3(config: ExperimentConfig, executor=None) -> ResultTable:
    """MSE versus 1/kappa: one fresh measurement and true state per trial.

    Probes are a single fixed pool of M_grid[0] Haar states.  A bin whose
    rejection sampler runs out of attempts is reported with NaN statistics
    and the diagnostic message; the sweep continues.
    """
    basis = gell_mann_basis(config.d)
    grid = config.inv_cond_grid or default_inv_cond_grid(config)
    n_probes = config.M_grid[0]
    n_events = config.N_grid[0]
    probe_r, probe_states = generate_probe_set(
        config.d, n_probes, config.admixture_probes, RngStream(config.master_seed).child(Purpose.PROBES).generator(), basis
    )
    table = ResultTable()
    chunks = chunked(list(range(config.trials)), 4 * worker_count(executor))
    for b, target in enumerate(grid):
        try:
            parts = map_tasks(_fig3_task, [(config, probe_r, probe_states, b, target, c) for c in chunks], executor)
        except SamplingExhaustedError as exc:
            nan = float("nan")
            table.rows.append(ResultRow(config.kind, "inv_cond", float(target), n_events, n_probes, nan, nan, nan, nan, nan, nan, nan, nan, 0))
            table.diagnostics.append({"unavailable": str(exc), "observed_range": list(exc.observed_range)})
            continue
        outcomes = [o for part in parts for o in part[0]]
        attempts = [a for part in parts for a in part[1]]
        crlbs = [o.crlb for o in sorted(outcomes, key=lambda o: o.index)]
        agg = aggregate(outcomes, crlb_value=math.fsum(crlbs) / len(crlbs))
        row = _row_from_aggregate(config.kind, "inv_cond", target, n_events, n_probes, agg)
        table.rows.append(row)
        table.diagnostics.append(_diagnostics(agg, mean_attempts=float(np.mean(attempts)), window=config.window))
    return table


RUNNERS = {"fig1": run_fig1, "fig2": run_fig2, "fig3": run_fig3, "custom": run_fig1}


def resolve_workers(workers):
    if workers in (None, "auto"):
        try:
            return max(1, len(os.sched_getaffinity(0)))
        except AttributeError:  # pragma: no cover - non-Linux
            return max(1, os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise InvalidInputError("workers must be >= 1")
    return workers


@contextmanager
def worker_pool(workers):
    n = resolve_workers(workers)
    if n == 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=n) as pool:
        yield pool


def run_experiment(config: ExperimentConfig, workers=1) -> ResultTable:
    config.validate()
    with worker_pool(workers) as pool:
        return RUNNERS[config.kind](config, pool)


def version_string():
    """``<version>+g<sha>[.dirty]`` when run from a git checkout."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def format_cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".12g")


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def results_csv_text(table):
    lines = [",".join(CSV_COLUMNS)]
    for row in table.rows:
        lines.append(",".join(format_cell(v) for v in row.as_tuple()))
    return "\n".join(lines) + "\n"


def read_results(path):
    """Parse a results.csv written by :func:`write_results`."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise InvalidInputError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            values = {}
            for col in CSV_COLUMNS:
                if col in _STR_COLUMNS:
                    values[col] = rec[col]
                elif col in _INT_COLUMNS:
                    values[col] = int(rec[col])
                else:
                    values[col] = float(rec[col])
            rows.append(ResultRow(**values))
    return ResultTable(rows)


def write_results(table, meta: ExperimentConfig, out_dir, elapsed_seconds=0.0, plot=False):
    """Write results.csv, meta.json, diagnostics.json and optional SVGs.

    Files are written to temporary names and renamed into place, so an
    interrupted run never leaves a partial results.csv.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        meta_obj = meta.to_dict()
        meta_obj.update(
            version=version_string(),
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            elapsed_seconds=round(float(elapsed_seconds), 3),
            kernel_backend=_kernels.BACKEND,
        )
        _atomic_write(out / "diagnostics.json", json.dumps(table.diagnostics, indent=2, default=_json_default) + "\n")
        _atomic_write(out / "meta.json", json.dumps(meta_obj, indent=2) + "\n")
        written = [out / "results.csv", out / "meta.json", out / "diagnostics.json"]
        if plot:
            from .plots import plot_table

            written.extend(plot_table(table, meta, out))
        _atomic_write(out / "results.csv", results_csv_text(table))
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return written


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def load_config(path):
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: config must be a JSON object")
    return data


def execute(config, out_dir, workers=1, plot=False):
    """Run an experiment and write its files; returns the table."""
    start = time.perf_counter()
    table = run_experiment(config, workers)
    write_results(table, config, out_dir, time.perf_counter() - start, plot=plot)
    return table
