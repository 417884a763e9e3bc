"""Figures for experiment results, written as PNG files next to the CSV/JSON output.

Uses the non-interactive Agg backend; nothing here is needed by the library core.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figsize(scale=1.0, ratio=None):
    width = 6.4 * scale
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path).name


def _field_panel(ax, space, values, title, cmap="viridis"):
    X = space.dof_coords
    if space.dim == 1:
        order = np.argsort(X[:, 0])
        ax.plot(X[order, 0], values[order], lw=1.2)
        ax.set_xlabel("x")
    else:
        # corner DoFs carry the triangulation; quadratic midpoints are dropped
        verts = space.mesh.n_nodes
        tri = space.mesh.elements
        im = ax.tripcolor(X[:verts, 0], X[:verts, 1], tri, values[:verts], shading="gouraud", cmap=cmap)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        plt.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title)


def plot_spatial(outcome, path):
    g = outcome.grid
    space, mean, std = g["space"], g["mean_dofs"], g["std_dofs"]
    has_std = np.all(np.isfinite(std))
    ncols = 2 if has_std else 1
    with plt.rc_context(STYLE):
        size = _figsize(1.0, 0.42) if ncols == 2 else _figsize(0.6, 0.8)
        fig, axes = plt.subplots(1, ncols, figsize=size)
        axes = np.atleast_1d(axes)
        _field_panel(axes[0], space, mean, "posterior mean")
        if has_std:
            _field_panel(axes[1], space, std, "posterior std. dev.", cmap="magma")
        return _save(fig, path)


def plot_space_time(outcome, path):
    g = outcome.grid
    x, t = g["x"], g["t"]
    panels = [("posterior mean", g["estimate"], "RdBu_r"), ("reference", g["truth"], "RdBu_r"),
              ("abs. error", np.abs(g["estimate"] - g["truth"]), "magma")]
    if g.get("std_grid") is not None:
        panels.append(("posterior std. dev.", g["std_grid"], "magma"))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=_figsize(1.4, 0.3), sharey=True)
        for ax, (title, Z, cmap) in zip(axes, panels):
            im = ax.pcolormesh(x, t, Z.T, shading="auto", cmap=cmap)
            ax.set_title(title)
            ax.set_xlabel("x")
            plt.colorbar(im, ax=ax, shrink=0.85)
        axes[0].set_ylabel("t")
        return _save(fig, path)


def plot_trace(trace, path):
    its = [r.iteration for r in trace]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_figsize(0.6))
        ax.semilogy(its, [max(r.decrement, 1e-300) for r in trace], "o-", ms=3, label="decrement")
        ax.semilogy(its, [max(r.gradient_norm, 1e-300) for r in trace], "s--", ms=3, label="gradient norm")
        ax.set_xlabel("Gauss-Newton iteration")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_convergence(record, path):
    n = np.array([lv.n_dofs for lv in record.levels], dtype=float)
    err = np.array([lv.relative_error for lv in record.levels], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_figsize(0.6))
        ax.loglog(n, err, "o-", ms=4)
        ax.set_xlabel("degrees of freedom")
        ax.set_ylabel("relative L2 error (%)")
        return _save(fig, path)


def plot_timings(record, path):
    phases = list(record.timings)
    vals = [record.timings[p] for p in phases]
    base = record.levels[-1].baseline_time
    if base is not None:
        phases.append("FEM baseline")
        vals.append(base)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_figsize(0.6))
        ax.barh(phases, vals, color="0.45")
        ax.set_xlabel("wall clock (s)")
        return _save(fig, path)


def render(record, outcomes, out):
    """Write all figures that apply to this record; returns {name: file name}."""
    out = Path(out)
    final = outcomes[-1]
    files = {}
    if "space" in final.grid:
        files["fig_solution"] = plot_spatial(final, out / "solution.png")
    else:
        files["fig_solution"] = plot_space_time(final, out / "space_time.png")
    if final.trace:
        files["fig_trace"] = plot_trace(final.trace, out / "trace.png")
    if len(record.levels) > 1:
        files["fig_convergence"] = plot_convergence(record, out / "convergence.png")
    files["fig_timings"] = plot_timings(record, out / "timings.png")
    return files
