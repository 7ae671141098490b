"""Gaussian space-time wavelet family and its design matrices.

Each atom is ``X T exp(-(X^2 + T^2) / 2)`` with ``X = j_x x - k_x`` and
``T = j_t t - k_t``.  The atom factorises into an x-profile and a t-profile,
which the jump operator exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .market import MarketParams

# |X| beyond which an atom profile is below ~1e-17 of its peak
SUPPORT = 9.0


@dataclass(frozen=True)
class WaveletAtom:
    j_x: float
    k_x: float
    j_t: float
    k_t: float

    def __post_init__(self):
        if self.j_x <= 0 or self.j_t <= 0:
            raise ValueError("wavelet scales must be positive")


def _profile(s):
    """Return g, g', g'' for g(s) = s exp(-s^2/2)."""
    e = np.exp(-0.5 * s * s)
    return s * e, (1.0 - s * s) * e, s * (s * s - 3.0) * e


def atom_eval(atom: WaveletAtom, x, t):
    """Value and the partials d/dt, d/dx, d^2/dx^2 of one atom."""
    gx, gx1, gx2 = _profile(atom.j_x * np.asarray(x, dtype=float) - atom.k_x)
    gt, gt1, _ = _profile(atom.j_t * np.asarray(t, dtype=float) - atom.k_t)
    return gx * gt, atom.j_t * gx * gt1, atom.j_x * gx1 * gt, atom.j_x**2 * gx2 * gt


@dataclass(frozen=True)
class FamilyConfig:
    """Scale ladders and shift spacing for :func:`build_family`.

    Scales run dyadically from ``j_min`` up to and including the largest
    ``j_min * 2**m`` not above ``j_max``.  Centres are spaced ``spacing / j``
    apart, with ``margin`` extra atoms beyond each domain edge.
    """

    jx_min: float = 2.0
    jx_max: float = 32.0
    jt_min: float = 1.0
    jt_max: float = 8.0
    spacing: float = 1.0
    margin: int = 1
    max_atoms: int = 20000

    def __post_init__(self):
        if not (0 < self.jx_min <= self.jx_max and 0 < self.jt_min <= self.jt_max):
            raise ValueError("scale ranges must be positive and nonempty")
        if self.spacing <= 0 or self.margin < 0:
            raise ValueError("spacing must be positive and margin nonnegative")


def dyadic_ladder(j_min: float, j_max: float) -> list[float]:
    if not 0 < j_min <= j_max:
        raise ValueError("empty scale range")
    out = []
    j = j_min
    while j <= j_max * (1 + 1e-12):
        out.append(j)
        j *= 2.0
    return out


def _shifts(j: float, lo: float, hi: float, spacing: float, margin: int) -> np.ndarray:
    """Shifts k (centre k/j) tiling [lo, hi] at ``spacing/j``."""
    first = math.floor(j * lo / spacing) - margin
    last = math.ceil(j * hi / spacing) + margin
    return spacing * np.arange(first, last + 1, dtype=float)


@dataclass(frozen=True)
class WaveletFamily:
    """Ordered atoms, stored as parallel arrays.

    ``profiles`` holds the distinct (j_x, k_x) pairs and ``profile_index``
    maps every atom to its row there.
    """

    j_x: np.ndarray
    k_x: np.ndarray
    j_t: np.ndarray
    k_t: np.ndarray
    profiles: np.ndarray = field(repr=False)
    profile_index: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.j_x)

    def atom(self, i: int) -> WaveletAtom:
        return WaveletAtom(float(self.j_x[i]), float(self.k_x[i]), float(self.j_t[i]), float(self.k_t[i]))

    @property
    def atoms(self) -> list[WaveletAtom]:
        return [self.atom(i) for i in range(len(self))]

    @classmethod
    def from_arrays(cls, j_x, k_x, j_t, k_t) -> "WaveletFamily":
        j_x, k_x, j_t, k_t = (np.ascontiguousarray(a, dtype=float) for a in (j_x, k_x, j_t, k_t))
        if np.any(j_x <= 0) or np.any(j_t <= 0):
            raise ValueError("wavelet scales must be positive")
        pairs = np.column_stack([j_x, k_x])
        profiles, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return cls(j_x, k_x, j_t, k_t, profiles, inverse.reshape(-1))

    @classmethod
    def from_atoms(cls, atoms) -> "WaveletFamily":
        a = np.array([[w.j_x, w.k_x, w.j_t, w.k_t] for w in atoms], dtype=float).reshape(-1, 4)
        return cls.from_arrays(*a.T)

    def x_support(self) -> tuple[float, float]:
        """Interval in x outside which every x-profile is numerically zero."""
        lo = (self.k_x - SUPPORT) / self.j_x
        hi = (self.k_x + SUPPORT) / self.j_x
        return float(lo.min()), float(hi.max())


def build_family(params: MarketParams, config: FamilyConfig | None = None) -> WaveletFamily:
    """Tile [ln s_min, ln s_max] x [0, T] with atoms at every scale pair.

    Ordering is lexicographic in (j_x, j_t, k_x, k_t).
    """
    cfg = config or FamilyConfig()
    jxs = dyadic_ladder(cfg.jx_min, cfg.jx_max)
    jts = dyadic_ladder(cfg.jt_min, cfg.jt_max)
    cols = [[], [], [], []]
    for jx in jxs:
        kxs = _shifts(jx, params.x_min, params.x_max, cfg.spacing, cfg.margin)
        for jt in jts:
            kts = _shifts(jt, 0.0, params.maturity, cfg.spacing, cfg.margin)
            kx, kt = np.meshgrid(kxs, kts, indexing="ij")
            cols[0].append(np.full(kx.size, jx))
            cols[1].append(kx.ravel())
            cols[2].append(np.full(kx.size, jt))
            cols[3].append(kt.ravel())
    j_x, k_x, j_t, k_t = (np.concatenate(c) for c in cols)
    if len(j_x) > cfg.max_atoms:
        raise ValueError(f"family of {len(j_x)} atoms exceeds max_atoms={cfg.max_atoms}")
    return WaveletFamily.from_arrays(j_x, k_x, j_t, k_t)


@dataclass(frozen=True)
class DesignMatrices:
    """Atom values and derivatives at a fixed point list (rows) per atom (columns)."""

    W: np.ndarray
    DtW: np.ndarray
    DxW: np.ndarray
    DxxW: np.ndarray
    points: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape


def design_matrices(family: WaveletFamily, points) -> DesignMatrices:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("no points")
    x = pts[:, :1]
    t = pts[:, 1:]
    gx, gx1, gx2 = _profile(family.j_x * x - family.k_x)
    gt, gt1, _ = _profile(family.j_t * t - family.k_t)
    W = gx * gt
    DtW = family.j_t * gx * gt1
    DxW = family.j_x * gx1 * gt
    DxxW = family.j_x**2 * gx2 * gt
    return DesignMatrices(W, DtW, DxW, DxxW, pts)


def evaluate_solution(c, b: float, matrices: DesignMatrices):
    """Return (u, u_t, u_x, u_xx) at the matrices' points."""
    c = np.asarray(c, dtype=float)
    if c.shape != (matrices.W.shape[1],):
        raise ValueError(f"expected {matrices.W.shape[1]} coefficients, got shape {c.shape}")
    return matrices.W @ c + b, matrices.DtW @ c, matrices.DxW @ c, matrices.DxxW @ c
