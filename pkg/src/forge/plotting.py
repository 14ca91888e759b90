"""Headless figure rendering for sweep reports (files only, no UI)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_ALGO_STYLE = {
    "smobf": {"color": "tab:blue", "marker": "o"},
    "fixed-k": {"color": "tab:orange", "marker": "s"},
}


def _style(algo: str) -> dict:
    return _ALGO_STYLE.get(algo, {"color": "tab:gray", "marker": "x"})


def plot_error_vs_budget(rows, path: str | Path) -> Path:
    """Error against budget for every algorithm that carries budget values."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    plotted = False
    for algo in sorted({r.algo for r in rows}):
        pts = [
            (r.budget, r.error)
            for r in rows
            if r.algo == algo and r.feasible and r.budget is not None and r.error is not None
        ]
        if not pts:
            continue
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            label=algo,
            **_style(algo),
        )
        plotted = True
    ax.set_xlabel("budget")
    ax.set_ylabel("validation error")
    ax.set_title("Ensemble error vs. cost budget")
    if plotted:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cost_vs_error(rows, path: str | Path) -> Path:
    """Cost (vertical) against error (horizontal), one series per algorithm.

    SMOBF points are annotated with their budget, baseline points with their
    ensemble size.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    plotted = False
    for algo in sorted({r.algo for r in rows}):
        pts = [
            r for r in rows if r.algo == algo and r.feasible
            and r.error is not None and r.cost is not None
        ]
        if not pts:
            continue
        ax.scatter(
            [r.error for r in pts],
            [r.cost for r in pts],
            label=algo,
            **_style(algo),
        )
        plotted = True
        for r in pts:
            tag = f"B{r.budget:g}" if r.budget is not None else f"#{r.n_models}"
            ax.annotate(tag, (r.error, r.cost), textcoords="offset points",
                        xytext=(4, 4), fontsize=8)
    ax.set_xlabel("validation error")
    ax.set_ylabel("ensemble cost")
    ax.set_title("Cost vs. error of produced ensembles")
    if plotted:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
