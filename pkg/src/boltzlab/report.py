"""Figure rendering for run and decay artifacts.

Renders matplotlib PNG files next to the delimited output: norm histories on
a log scale, conserved-defect and entropy traces, and decay fits with the
fitted law overlaid.  The Agg backend is forced so rendering works headless;
the resolved config is embedded in the PNG text metadata, matching the
provenance headers of the CSV files.  No timestamps enter the artifacts.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _metadata(provenance):
    if provenance is None:
        return None
    return {"Description": json.dumps(provenance, sort_keys=True)}


def _save(fig, path, provenance):
    fig.savefig(path, dpi=110, metadata=_metadata(provenance))
    plt.close(fig)
    return str(path)


def render_run_figures(columns, rows, outdir, basename, provenance=None):
    """Norm-history and invariant-drift figures for a diagnostics series.

    Returns the list of written file paths.
    """
    rows = np.asarray(rows, dtype=float)
    col = {name: rows[:, i] for i, name in enumerate(columns)}
    t = col["t"]
    written = []

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, label in (("winf", "sup |w_b f|"), ("linfx_l1v", "sup_x int |f| dv")):
        y = col[name]
        pos = y > 0.0
        if pos.any():
            ax.semilogy(t[pos], y[pos], marker=".", label=label)
        else:
            ax.plot(t, y, marker=".", label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("perturbation norms")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    written.append(_save(fig, f"{outdir}/{basename}_norms.png", provenance))

    fig, axes = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    for name in ("M0", "J0x", "E0"):
        axes[0].plot(t, col[name], marker=".", label=name)
    axes[0].set_ylabel("defect moments")
    axes[0].legend()
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(t, col["entropy"], marker=".", label="entropy")
    axes[1].plot(t, col["lemma25_lhs"], marker=".", label="quadratic/linear lower bound")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("entropy functionals")
    axes[1].legend()
    axes[1].grid(True, alpha=0.3)
    fig.tight_layout()
    written.append(_save(fig, f"{outdir}/{basename}_invariants.png", provenance))
    return written


def render_decay_figure(t, y, fit, outdir, basename, provenance=None):
    """Norm history with the fitted decay law overlaid; returns the path."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    pos = y > 0.0
    ax.semilogy(t[pos], y[pos], marker=".", linestyle="none", label="samples")
    lo, hi = fit.window
    ts = np.linspace(lo, hi, 200)
    if fit.model == "exp":
        ax.semilogy(ts, fit.amplitude * np.exp(-fit.rate * ts), label=f"exp fit, rate {fit.rate:.4g}")
    else:
        ax.semilogy(ts, fit.amplitude * (1.0 + ts) ** (-fit.rate), label=f"alg fit, exponent {fit.rate:.4g}")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, f"{outdir}/{basename}_decay.png", provenance)
