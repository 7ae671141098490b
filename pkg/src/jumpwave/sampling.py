"""Training point sets: Sobol interior points, terminal points and edge points."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .market import MarketParams

DEFAULT_SIZES = (8192, 1024, 512)


@dataclass(frozen=True)
class TrainingSets:
    collocation: np.ndarray  # (N_c, 2) columns x, t
    terminal: np.ndarray  # (N_ic, 2), t == T
    boundary: np.ndarray  # (N_bc, 2), x at either edge

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.collocation), len(self.terminal), len(self.boundary)


def sobol_points(n: int, bounds, skip: int = 0) -> np.ndarray:
    """First ``n`` points of the unscrambled 2-D Sobol sequence mapped to ``bounds``.

    ``bounds`` is ``((x_lo, x_hi), (t_lo, t_hi))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    engine = qmc.Sobol(d=2, scramble=False)
    if skip:
        engine.fast_forward(skip)
    with warnings.catch_warnings():
        # balance warning for non power-of-two n
        warnings.simplefilter("ignore", UserWarning)
        u = engine.random(n)
    (x0, x1), (t0, t1) = bounds
    return np.column_stack([x0 + (x1 - x0) * u[:, 0], t0 + (t1 - t0) * u[:, 1]])


def sample_training_sets(params: MarketParams, sizes=DEFAULT_SIZES, seed: int = 0,
                         skip: int = 0) -> TrainingSets:
    n_c, n_ic, n_bc = sizes
    if min(sizes) < 1:
        raise ValueError("all set sizes must be positive")
    lo, hi, T = params.x_min, params.x_max, params.maturity
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    colloc = sobol_points(n_c, ((lo, hi), (0.0, T)), skip)
    terminal = np.column_stack([rng.uniform(lo, hi, n_ic), np.full(n_ic, T)])
    n_lo = n_bc // 2
    t_b = rng.uniform(0.0, T, n_bc)
    x_b = np.where(np.arange(n_bc) < n_lo, lo, hi)
    boundary = np.column_stack([x_b, t_b])
    return TrainingSets(colloc, terminal, boundary)


def star_discrepancy(points, bins: int = 256) -> float:
    """Star discrepancy of points in the unit square, maximised over a corner lattice.

    Anchored boxes ``[0, a) x [0, b)`` with corners on a ``bins`` lattice are
    counted exactly via a cumulative histogram; the result is a lower bound
    on the true star discrepancy that converges as ``bins`` grows.
    """
    p = np.asarray(points, dtype=float)
    edges = np.linspace(0.0, 1.0, bins + 1)
    h, _, _ = np.histogram2d(p[:, 0], p[:, 1], bins=[edges, edges])
    counts = np.zeros((bins + 1, bins + 1))
    counts[1:, 1:] = h.cumsum(0).cumsum(1)
    area = np.outer(edges, edges)
    return float(np.abs(counts / len(p) - area).max())
