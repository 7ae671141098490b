"""Run artifacts: CSV/JSON writers, surface grids and the hashed manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .market import MarketParams, payoff_call
from .reference import merton_series_call
from .risk import greeks_scan
from .solution import Solution
from .trainer import TrainReport

MANIFEST = "manifest.json"


def fmt(v) -> str:
    """Shortest round-trip text for a float; ints and strings pass through."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    """Write a headed CSV; ``path`` may be any object with ``write_text``."""
    if isinstance(path, (str, os.PathLike)):
        path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, files, meta: dict) -> Path:
    """Hash every listed file (names relative to ``out_dir``) into manifest.json."""
    out_dir = Path(out_dir)
    entries = {name: sha256(out_dir / name) for name in sorted(files)}
    return write_json(out_dir / MANIFEST, {"files": entries, **meta})


def grid_axes(params: MarketParams, n_s: int, n_t: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform spot and calendar-time axes spanning the trained domain."""
    if n_s < 2 or n_t < 2:
        raise ValueError("grid needs at least 2 points per axis")
    return np.linspace(params.s_min, params.s_max, n_s), np.linspace(0.0, params.maturity, n_t)


def benchmark_surface(params: MarketParams, spots, times) -> np.ndarray:
    """Series prices on the (time, spot) grid; payoff at maturity."""
    spots = np.asarray(spots, dtype=float)
    out = np.empty((len(times), len(spots)))
    for i, t in enumerate(times):
        tau = params.maturity - t
        out[i] = (merton_series_call(params, spots, tau) if tau > 1e-12
                  else payoff_call(np.log(spots), params.strike))
    return out


def surface_rows(spots, times, values):
    for i, t in enumerate(times):
        for j, s in enumerate(spots):
            yield s, t, values[i, j]


def write_surfaces(out_dir, solution: Solution, n_s: int = 50, n_t: int = 50) -> list[str]:
    """price_surface.csv, benchmark_surface.csv and error_surface.csv on one grid."""
    out_dir = Path(out_dir)
    spots, times = grid_axes(solution.params, n_s, n_t)
    S, T = np.meshgrid(spots, times)
    model = solution.price(S, T)
    bench = benchmark_surface(solution.params, spots, times)
    write_csv(out_dir / "price_surface.csv", ["spot", "time_years", "price"],
              surface_rows(spots, times, model))
    write_csv(out_dir / "benchmark_surface.csv", ["spot", "time_years", "series_price"],
              surface_rows(spots, times, bench))
    write_csv(out_dir / "error_surface.csv", ["spot", "time_years", "abs_error"],
              surface_rows(spots, times, np.abs(model - bench)))
    return ["price_surface.csv", "benchmark_surface.csv", "error_surface.csv"]


def write_greeks(out_dir, solution: Solution, times=None, n_s: int = 101, per_day: bool = False) -> str:
    """Greeks scans in spot at several calendar times; theta per year unless ``per_day``."""
    p = solution.params
    times = (0.0, 0.25, 0.5, 0.75) if times is None else times
    spots = np.linspace(p.s_min, p.s_max, n_s)
    rows = []
    for t in times:
        g = greeks_scan(solution, spots, t)
        theta = g["theta"] / 365.0 if per_day else g["theta"]
        rows.extend(zip(g["spot"], [float(t)] * n_s, g["price"], g["delta"], g["gamma"], theta))
    unit = "theta_per_day" if per_day else "theta_per_year"
    write_csv(Path(out_dir) / "greeks.csv", ["spot", "time_years", "price", "delta", "gamma", unit], rows)
    return "greeks.csv"


def write_loss_history(out_dir, report: TrainReport) -> str:
    rows = []
    step = 0
    for name, stage in report.stages.items():
        for i, loss in enumerate(stage.history, start=1):
            step += 1
            rows.append((step, name, i, loss))
    write_csv(Path(out_dir) / "loss_history.csv", ["step", "stage", "stage_step", "loss"], rows)
    return "loss_history.csv"
