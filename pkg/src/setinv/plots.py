"""SVG figures for runs, subpavings and Lotka-Volterra trajectories."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import INNER, OUTER, UNCERTAIN, Subpaving  # noqa: E402
from .models import ProblemSpec, membership_batch  # noqa: E402

KIND_COLORS = {INNER: "#d62728", UNCERTAIN: "#f2c80f", OUTER: "#1f77b4"}
ORIGIN_MARKERS = {"random": "o", "active": "x", "fallback-random": "s"}


class PlotError(ValueError):
    pass


def _require_2d(dim: int, what: str) -> None:
    if dim != 2:
        raise PlotError(f"{what} needs a 2D problem, got dimension {dim}")


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def _limits(ax, spec: ProblemSpec) -> None:
    lo, hi = spec.state_space.lo, spec.state_space.hi
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")


def _truth_contour(ax, spec: ProblemSpec, resolution: int) -> None:
    lo, hi = spec.state_space.lo, spec.state_space.hi
    gx = np.linspace(lo[0], hi[0], resolution)
    gy = np.linspace(lo[1], hi[1], resolution)
    XX, YY = np.meshgrid(gx, gy)
    lab = membership_batch(spec, np.column_stack([XX.ravel(), YY.ravel()])).reshape(XX.shape)
    ax.contour(gx, gy, lab.astype(float), levels=[0.0], colors="k", linewidths=1.0)


def plot_samples(points, labels, origins, spec: ProblemSpec, path, title: str | None = None) -> Path:
    """Scatter coloured by label, marker by sample origin."""
    points = np.asarray(points, dtype=float)
    _require_2d(points.shape[1], "sample scatter")
    labels = np.asarray(labels)
    origins = np.asarray(origins)
    fig, ax = plt.subplots(figsize=(5, 5))
    for origin, marker in ORIGIN_MARKERS.items():
        for lab, color in ((1, "#2ca02c"), (-1, "#1f77b4")):
            sel = (origins == origin) & (labels == lab)
            if sel.any():
                ax.scatter(points[sel, 0], points[sel, 1], s=10, marker=marker, c=color,
                           linewidths=0.8, label=f"{origin} {lab:+d}")
    _limits(ax, spec)
    ax.legend(fontsize=6, loc="upper right")
    ax.set_title(title or f"{spec.name}: samples")
    return _save(fig, path)


def plot_region(model, spec: ProblemSpec, path, resolution: int = 301, samples=None,
                title: str | None = None) -> Path:
    """Predicted positive region with the oracle boundary overlaid."""
    _require_2d(spec.input_dim, "region overlay")
    lo, hi = spec.state_space.lo, spec.state_space.hi
    gx = np.linspace(lo[0], hi[0], resolution)
    gy = np.linspace(lo[1], hi[1], resolution)
    XX, YY = np.meshgrid(gx, gy)
    psi = model.decision_values(np.column_stack([XX.ravel(), YY.ravel()])).reshape(XX.shape)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.contourf(gx, gy, (psi >= 0).astype(float), levels=[-0.5, 0.5, 1.5], colors=["white", "#ffbb78"])
    ax.contour(gx, gy, psi, levels=[0.0], colors="#d62728", linewidths=1.0)
    _truth_contour(ax, spec, resolution)
    if samples is not None:
        pts = np.asarray(samples, dtype=float)
        ax.scatter(pts[:, 0], pts[:, 1], s=4, c="0.3")
    _limits(ax, spec)
    ax.set_title(title or f"{spec.name}: predicted region (fill) vs truth (black)")
    return _save(fig, path)


def plot_subpaving(sp: Subpaving, path, title: str | None = None) -> Path:
    """Inner, uncertain and outer boxes in three colours."""
    _require_2d(sp.search_box.dim, "subpaving plot")
    fig, ax = plt.subplots(figsize=(5, 5))
    for code in (OUTER, UNCERTAIN, INNER):
        sel = sp.kind == code
        rects = [Rectangle((a[0], a[1]), b[0] - a[0], b[1] - a[1]) for a, b in zip(sp.lo[sel], sp.hi[sel])]
        ax.add_collection(PatchCollection(rects, facecolor=KIND_COLORS[code], edgecolor="k", linewidth=0.1))
    lo, hi = sp.search_box.lo, sp.search_box.hi
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_title(title or f"subpaving, epsilon={sp.epsilon:g}")
    return _save(fig, path)


def plot_lv_trajectory(traj, path, title: str | None = None) -> Path:
    """Prey and predator against time."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(traj.t, traj.u, label="prey u")
    ax.plot(traj.t, traj.v, label="predator v")
    ax.set_xlabel("t")
    ax.set_ylabel("population")
    ax.legend()
    ax.set_title(title or f"Lotka-Volterra, min prey {traj.min_prey:.4g}")
    return _save(fig, path)
