"""Figures written next to the CSV/JSON outputs of a run."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _closed(b):
    b = np.asarray(b, float)
    return np.vstack([b, b[:1]])


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, dpi=120, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_evolution(times, boundaries, path, target=None, eps=None, agents=None, n_frames: int = 6):
    """Snapshots of the evolving boundary, with the target set and its eps-neighbourhood."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    idx = np.unique(np.linspace(0, len(times) - 1, min(n_frames, len(times))).astype(int))
    cmap = plt.get_cmap("viridis")
    for k, i in enumerate(idx):
        b = _closed(boundaries[i])
        ax.plot(b[:, 0], b[:, 1], color=cmap(k / max(len(idx) - 1, 1)), lw=1.2, label=f"t={times[i]:.3g}")
    if target is not None:
        tb = _closed(target)
        ax.plot(tb[:, 0], tb[:, 1], "k--", lw=1.0, label="target")
        if eps:
            from shapely.geometry import Polygon

            ring = np.asarray(Polygon(target).buffer(eps).exterior.coords)
            ax.plot(ring[:, 0], ring[:, 1], "k:", lw=0.8, label="target + eps")
    if agents is not None and len(agents):
        a = np.asarray(agents).reshape(-1, 2)
        ax.plot(a[:, 0], a[:, 1], ".", color="tab:red", ms=1.5, alpha=0.4, label="agent stops")
    ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="upper right")
    ax.set_title("set evolution")
    return _save(fig, path)


def plot_ladder(rows, path, key: str = "achieved_dH", eps=None, title: str = "budget ladder"):
    """A metric per (n, N) rung."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    labels = [f"{r['n']}x{r['N']}" for r in rows]
    vals = [r[key] for r in rows]
    ax.semilogy(range(len(vals)), vals, "o-")
    if eps:
        ax.axhline(eps, color="k", ls="--", lw=0.8, label="eps")
        ax.legend()
    ax.set_xticks(range(len(vals)), labels)
    ax.set_xlabel("rung (n x N)")
    ax.set_ylabel(key)
    ax.set_title(title)
    return _save(fig, path)


def plot_errors(times, sup_err, dH, path, eps=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(times, sup_err, label="max trajectory error")
    ax.plot(times, dH, label="Hausdorff distance")
    if eps:
        ax.axhline(eps, color="k", ls="--", lw=0.8, label="eps")
    ax.set_xlabel("t")
    ax.legend()
    ax.set_title("agent flow vs sweeping process")
    return _save(fig, path)


def plot_profile(eps, inflow, defect, path, slope=None):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    eps = np.asarray(eps)
    a1.loglog(eps, np.abs(inflow), "o-")
    a1.set_xlabel("distance to boundary")
    a1.set_ylabel("|normal inflow|")
    if slope is not None:
        a1.set_title(f"log-log slope {slope:.3f}")
    a2.loglog(eps, defect, "s-", color="tab:orange")
    a2.set_xlabel("distance to boundary")
    a2.set_ylabel("alignment defect")
    return _save(fig, path)


def plot_volume(times, measured, bound, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(times, measured, label="measured area")
    ax.plot(times, bound, "--", label="lower bound")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)
