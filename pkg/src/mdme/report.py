"""Figure rendering for CLI reports.

Every renderer takes an already-emitted delimited file (or parsed report)
and writes a PNG next to it, so figures are always derived from the same
artifacts users get as CSV/JSON.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .objectives import MetricReport  # noqa: E402


def render_learning_curve(curve_csv, out_png) -> Path:
    iters, loss, val_it, val = [], [], [], []
    with open(curve_csv) as fh:
        for row in csv.DictReader(fh):
            it = int(row["iteration"])
            iters.append(it)
            loss.append(float(row["loss[-]"]))
            cell = row["val_error[-]"]
            if cell:
                val_it.append(it)
                val.append(float(cell))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(iters, loss, lw=0.8, color="tab:blue", label="training loss")
    if val_it:
        ax.semilogy(val_it, val, "o-", ms=3, color="tab:red", label="validation smape")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss / error")
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return Path(out_png)


def render_cluster_scatter(overlay_csv, out_png) -> Path:
    rows = []
    with open(overlay_csv) as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    fig, ax = plt.subplots(figsize=(6, 5))
    clusters = sorted({int(r["cluster"]) for r in rows})
    have_err = any(r["mean_error[-]"] for r in rows)
    for c in clusters:
        pts = [r for r in rows if int(r["cluster"]) == c]
        xs = [float(r["pc1[-]"]) for r in pts]
        ys = [float(r["pc2[-]"]) for r in pts]
        if have_err:
            errs = [float(r["mean_error[-]"]) if r["mean_error[-]"] else 0.0 for r in pts]
            sc = ax.scatter(xs, ys, c=errs, marker=f"${c}$", s=120, cmap="viridis")
        else:
            ax.scatter(xs, ys, label=f"cluster {c}", s=40)
    for r in rows:
        ax.annotate(r["motion"], (float(r["pc1[-]"]), float(r["pc2[-]"])),
                    fontsize=6, alpha=0.6, xytext=(3, 3), textcoords="offset points")
    if have_err:
        fig.colorbar(sc, ax=ax, label="mean error")
    else:
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel("pc1")
    ax.set_ylabel("pc2")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return Path(out_png)


def render_eval_report(report: MetricReport, out_png) -> Path:
    motions = [r.motion for r in report.rows]
    totals = [r.total for r in report.rows]
    stds = [r.total_std for r in report.rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(motions) + 2), 4))
    ax.bar(range(len(motions)), totals, yerr=stds, capsize=3, color="tab:blue", alpha=0.8)
    ax.set_xticks(range(len(motions)))
    ax.set_xticklabels(motions, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("smape")
    ax.axhline(report.mean_total, color="tab:red", lw=0.8, ls="--",
               label=f"mean {report.mean_total:.3f}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return Path(out_png)
