"""Figure rendering for trajectories, solver output, and harness reports.

Everything draws through the Agg backend and writes PNG files next to the
delimited output; the CSV stays the machine-readable contract.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import TrajectoryRecord
from .harness import HarnessReport
from .pde import PdeSolution


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_trajectory(record: TrajectoryRecord, path: str | Path) -> Path:
    """Binned density profiles of one trajectory at its checkpoint times."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    colors = plt.cm.viridis(np.linspace(0.15, 0.9, record.times.size))
    for i, t in enumerate(record.times):
        ax.plot(record.bin_centers, record.profiles[i], color=colors[i], label=f"t={t:g}")
    ax.set_xlabel("u")
    ax.set_ylabel("density")
    ax.set_title(f"empirical profile, n={record.params.n}")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_solution(sol: PdeSolution, path: str | Path) -> Path:
    """Solver rows over the grid, one curve per stored time."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    colors = plt.cm.viridis(np.linspace(0.15, 0.9, sol.times.size))
    for i, t in enumerate(sol.times):
        ax.plot(sol.grid, sol.values[i], color=colors[i], label=f"t={t:g}")
    ax.set_xlabel("u")
    ax.set_ylabel("rho")
    ax.set_title(f"{sol.bc.kind} solution, M={sol.grid.size - 1}")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_profile_curve(grid: np.ndarray, values: np.ndarray, label: str, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(grid, values)
    ax.set_xlabel("u")
    ax.set_ylabel("rho")
    ax.set_title(label)
    return _finish(fig, path)


def plot_convergence(report: HarnessReport, directory: str | Path, stem: str) -> list[Path]:
    """Error-vs-size curves plus the profile overlay at the final checkpoint."""
    directory = Path(directory)
    written = []

    times = sorted({row["time"] for row in report.rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for t in times:
        pts = sorted(
            (row["n"], row["error"], row["std_error"])
            for row in report.rows
            if row["metric"] == "L1" and row["time"] == t
        )
        ns = [p[0] for p in pts]
        errs = [p[1] for p in pts]
        ses = [0.0 if np.isnan(p[2]) else p[2] for p in pts]
        ax.errorbar(ns, errs, yerr=ses, marker="o", capsize=3, label=f"t={t:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("L1 error")
    ax.set_title("ensemble mean vs solver")
    ax.legend(fontsize=8)
    written.append(_finish(fig, directory / f"{stem}_error.png"))

    if report.profiles:
        t_last = max(row["time"] for row in report.profiles)
        n_max = max(row["n"] for row in report.profiles)
        rows = [r for r in report.profiles if r["time"] == t_last and r["n"] == n_max]
        rows.sort(key=lambda r: r["bin_index"])
        centers = [r["bin_center"] for r in rows]
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        ax.errorbar(
            centers,
            [r["simulated"] for r in rows],
            yerr=[3 * r["bin_se"] for r in rows],
            fmt="o",
            ms=3,
            capsize=2,
            label=f"simulation n={n_max}",
        )
        ax.plot(centers, [r["reference"] for r in rows], "-", label="equation")
        ax.set_xlabel("u")
        ax.set_ylabel("density")
        ax.set_title(f"profiles at t={t_last:g}")
        ax.legend(fontsize=8)
        written.append(_finish(fig, directory / f"{stem}_profiles.png"))
    return written


def plot_discrimination(report: HarnessReport, directory: str | Path, stem: str) -> list[Path]:
    """Grouped bars of L1 distance to each reference equation per theta."""
    rows = [r for r in report.rows if r["matched"] >= 0]
    thetas = sorted({r["theta"] for r in rows})
    refs = sorted({r["reference"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    width = 0.8 / len(refs)
    for i, ref in enumerate(refs):
        vals = []
        for theta in thetas:
            match = [r for r in rows if r["theta"] == theta and r["reference"] == ref]
            vals.append(match[0]["l1_distance"] if match else np.nan)
        ax.bar(np.arange(len(thetas)) + i * width, vals, width, label=ref)
    ax.set_xticks(np.arange(len(thetas)) + 0.4 - width / 2)
    ax.set_xticklabels([f"theta={t:g}" for t in thetas])
    ax.set_ylabel("L1 distance")
    ax.set_title("boundary-condition discrimination")
    ax.legend(fontsize=8)
    return [_finish(fig, directory / f"{stem}_distances.png")]


def plot_replacement(report: HarnessReport, directory: str | Path, stem: str) -> list[Path]:
    """Replacement estimates against size, one curve per quantity."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    groups: dict[str, list[tuple[int, float, float]]] = {}
    for r in report.rows:
        eps = r["epsilon"]
        key = r["quantity"] if np.isnan(eps) else f"{r['quantity']} eps={eps:g}"
        groups.setdefault(key, []).append((r["n"], r["estimate"], r["std_error"]))
    for key, pts in sorted(groups.items()):
        pts.sort()
        ns = [p[0] for p in pts]
        vals = [p[1] for p in pts]
        ses = [0.0 if np.isnan(p[2]) else p[2] for p in pts]
        ax.errorbar(ns, vals, yerr=ses, marker="o", capsize=3, label=key)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("time-averaged discrepancy")
    ax.set_title("replacement diagnostics")
    ax.legend(fontsize=7)
    return [_finish(fig, directory / f"{stem}_estimates.png")]


def plot_martingale(report: HarnessReport, directory: str | Path, stem: str) -> list[Path]:
    """Ensemble mean with a 3 SE band, and the bracket comparison."""
    keys = sorted({(r["n"], r["fn"]) for r in report.rows})
    fig, axes = plt.subplots(1, 2, figsize=(9.6, 4.0))
    for n, fn in keys:
        rows = sorted(
            (r for r in report.rows if r["n"] == n and r["fn"] == fn),
            key=lambda r: r["time"],
        )
        ts = [r["time"] for r in rows]
        means = [r["mean_martingale"] for r in rows]
        band = [3 * (0.0 if np.isnan(r["se_martingale"]) else r["se_martingale"]) for r in rows]
        label = f"n={n}, G={fn}"
        axes[0].errorbar(ts, means, yerr=band, marker="o", capsize=3, label=label)
        axes[1].plot(ts, [r["variance"] for r in rows], marker="o", label=f"Var, {label}")
        axes[1].plot(ts, [r["mean_bracket"] for r in rows], marker="x", ls="--", label=f"bracket, {label}")
    axes[0].axhline(0.0, color="k", lw=0.8)
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("mean martingale")
    axes[0].legend(fontsize=7)
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("second moment")
    axes[1].legend(fontsize=7)
    fig.suptitle("compensated pairing process")
    return [_finish(fig, directory / f"{stem}_moments.png")]
