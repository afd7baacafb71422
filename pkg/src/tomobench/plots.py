"""Static SVG figures for result tables (matplotlib, Agg backend)."""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SVG_META = {"Date": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_SVG_META, bbox_inches="tight")
    plt.close(fig)
    return Path(path)


def plot_mse_vs_probes(rows, n_events, path):
    rows = sorted(rows, key=lambda r: r.M)
    m = np.array([r.M for r in rows])
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.errorbar(m, [r.mse_dqst for r in rows], yerr=[r.mse_dqst_se for r in rows], fmt="o", color="tab:blue", label="DQST")
    ax.errorbar(m, [r.mse_dpt for r in rows], yerr=[r.mse_dpt_se for r in rows], fmt="s", color="tab:red", label="DPT")
    ax.axhline(rows[0].crlb, color="black", lw=1, label="CRLB")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("number of probes M")
    ax.set_ylabel("mean square error")
    ax.set_title(f"N = {n_events}")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_bias(rows_by_n, path):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for n_events, rows in sorted(rows_by_n.items()):
        rows = sorted(rows, key=lambda r: r.M)
        ax.plot([r.M for r in rows], [r.bias_fro for r in rows], "o-", label=f"N = {n_events}")
    ax.set_xscale("log")
    ax.set_xlabel("number of probes M")
    ax.set_ylabel(r"$\|\langle \hat A_p\rangle - A\|_F$")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_mse_vs_condition(rows, path):
    rows = sorted((r for r in rows if r.trials_used > 0), key=lambda r: r.coord_value)
    x = [r.coord_value for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.errorbar(x, [r.mse_dqst for r in rows], yerr=[r.mse_dqst_se for r in rows], fmt="o", color="tab:blue", label="DQST")
    ax.errorbar(x, [r.mse_dpt for r in rows], yerr=[r.mse_dpt_se for r in rows], fmt="s", color="tab:red", label="DPT")
    ax.set_yscale("log")
    ax.set_xlabel(r"inverse condition number $1/\kappa$")
    ax.set_ylabel("mean square error")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_table(table, config, out_dir):
    out_dir = Path(out_dir)
    written = []
    by_n = {}
    for row in table.rows:
        by_n.setdefault(row.N, []).append(row)
    if config.kind in ("fig1", "custom"):
        for n_events, rows in sorted(by_n.items()):
            written.append(plot_mse_vs_probes(rows, n_events, out_dir / f"{config.kind}_N{n_events}.svg"))
    elif config.kind == "fig2":
        written.append(plot_bias(by_n, out_dir / "fig2_bias.svg"))
    elif config.kind == "fig3":
        written.append(plot_mse_vs_condition(table.rows, out_dir / "fig3_condition.svg"))
    return written
