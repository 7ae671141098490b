"""PNG figures rendered from the CSV artifacts (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .artifacts import read_csv  # noqa: E402

# fixed metadata keeps PNG bytes reproducible
PNG_META = {"Software": None}


def _columns(path):
    header, rows = read_csv(path)
    data = np.array([[float(v) if _is_num(v) else np.nan for v in r] for r in rows])
    return header, data, rows


def _is_num(v: str) -> bool:
    try:
        float(v)
    except ValueError:
        return False
    return True


def _grid(data):
    spots = np.unique(data[:, 0])
    times = np.unique(data[:, 1])
    return spots, times, data[:, 2].reshape(len(times), len(spots))


def _save(fig, path) -> str:
    fig.savefig(path, dpi=110, metadata=PNG_META)
    plt.close(fig)
    return Path(path).name


def surface_figure(csv_path, png_path, title: str, label: str) -> str:
    _, data, _ = _columns(csv_path)
    spots, times, z = _grid(data)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(spots, times, z, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=label)
    ax.set_xlabel("spot S")
    ax.set_ylabel("calendar time t (years)")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, png_path)


def greeks_figure(csv_path, png_path) -> str:
    header, data, _ = _columns(csv_path)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for t in np.unique(data[:, 1]):
        sel = data[:, 1] == t
        for ax, col in zip(axes, (3, 4, 5)):
            ax.plot(data[sel, 0], data[sel, col], label=f"t={t:g}")
    for ax, col in zip(axes, (3, 4, 5)):
        ax.set_xlabel("spot S")
        ax.set_title(header[col])
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, png_path)


def loss_figure(csv_path, png_path) -> str:
    _, _, rows = _columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    stages: dict[str, list[tuple[int, float]]] = {}
    for step, stage, _, loss in rows:
        stages.setdefault(stage, []).append((int(step), float(loss)))
    for stage, pts in stages.items():
        a = np.array(pts)
        ax.semilogy(a[:, 0], a[:, 1], label=stage)
    ax.set_xlabel("step")
    ax.set_ylabel("objective")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    return _save(fig, png_path)


def loss_distribution_figure(losses, var: float, cvar: float, png_path) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(losses, bins=120, density=True, color="0.6")
    ax.axvline(var, color="C0", label=f"VaR {var:.4f}")
    ax.axvline(cvar, color="C3", linestyle="--", label=f"CVaR {cvar:.4f}")
    ax.set_xlabel("loss")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    return _save(fig, png_path)


def render_run(out_dir) -> list[str]:
    """Render every figure whose source CSV exists in ``out_dir``."""
    out = Path(out_dir)
    made = []
    if (out / "price_surface.csv").exists():
        made.append(surface_figure(out / "price_surface.csv", out / "price_surface.png",
                                   "surrogate price", "V"))
    if (out / "error_surface.csv").exists():
        made.append(surface_figure(out / "error_surface.csv", out / "error_surface.png",
                                   "|surrogate - series|", "abs error"))
    if (out / "greeks.csv").exists():
        made.append(greeks_figure(out / "greeks.csv", out / "greeks.png"))
    if (out / "loss_history.csv").exists():
        made.append(loss_figure(out / "loss_history.csv", out / "loss_history.png"))
    return made
