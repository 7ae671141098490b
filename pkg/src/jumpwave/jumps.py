"""Jump integral ``(u * f_Y)(x) = int u(x + y) f_Y(y) dy`` on a uniform log-price grid.

The integral is a cross-correlation with the log-jump density.  It is
computed by circular convolution with the reflected density, using FFTs of a
padded grid wide enough that wrap-around never reaches the working domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import MarketParams, log_jump_density
from .wavelets import WaveletFamily, _profile

DEFAULT_N = 2048
MASS_TOL = 1e-6


def jump_pad(params: MarketParams) -> float:
    return max(1.0, abs(params.mu_j) + 6.0 * params.sigma_j)


def _next_pow2(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class LogGrid:
    x_lo: float
    x_hi: float
    n: int

    def __post_init__(self):
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError("grid size must be a power of two >= 4")
        if not self.x_hi > self.x_lo:
            raise ValueError("empty grid")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.n)

    @classmethod
    def for_params(cls, params: MarketParams, n: int = DEFAULT_N, pad: float | None = None) -> "LogGrid":
        pad = jump_pad(params) if pad is None else pad
        return cls(params.x_min - pad, params.x_max + pad, n)

    @classmethod
    def for_family(cls, family: WaveletFamily, params: MarketParams, n: int = DEFAULT_N,
                   max_n: int = 1 << 20) -> "LogGrid":
        """Grid covering every x-profile's support plus the jump pad.

        ``n`` is raised (to a power of two) until the spacing resolves both
        the finest profile and the jump density with four nodes per width.
        """
        pad = jump_pad(params)
        lo, hi = family.x_support()
        x_lo = min(lo, params.x_min) - pad
        x_hi = max(hi, params.x_max) + pad
        finest = min(1.0 / float(family.j_x.max()), params.sigma_j)
        need = _next_pow2(int(math.ceil(4.0 * (x_hi - x_lo) / finest)) + 1)
        n = max(n, need)
        if n > max_n:
            raise ValueError(f"grid would need {n} nodes (> {max_n})")
        return cls(x_lo, x_hi, n)

    def offsets(self) -> np.ndarray:
        """Signed node offsets in FFT order (origin at index 0)."""
        return np.fft.ifftshift((np.arange(self.n) - self.n // 2) * self.dx)


@dataclass(frozen=True)
class KernelSpectrum:
    spectrum: np.ndarray
    samples: np.ndarray
    mass: float
    grid: LogGrid
    reach: float  # jump sizes beyond this carry negligible mass


def precompute_kernel(grid: LogGrid, params: MarketParams) -> KernelSpectrum:
    """FFT of the dx-weighted reflected jump density on the grid's offsets."""
    centred = (np.arange(grid.n) - grid.n // 2) * grid.dx
    # reflection turns the correlation into a convolution
    g = log_jump_density(-centred, params) * grid.dx
    samples = np.fft.ifftshift(g)
    mass = float(samples.sum())
    if abs(mass - 1.0) > MASS_TOL:
        raise ValueError(
            f"jump density mass on grid is {mass:.8f}; widen the pad or refine the grid"
        )
    reach = abs(params.mu_j) + 6.0 * params.sigma_j
    return KernelSpectrum(np.fft.fft(samples), samples, mass, grid, reach)


def convolve_fft(u_grid, kernel: KernelSpectrum):
    """Jump integral of grid samples; works along the last axis."""
    u = np.asarray(u_grid, dtype=float)
    if u.shape[-1] != kernel.grid.n:
        raise ValueError(f"expected {kernel.grid.n} grid values, got {u.shape[-1]}")
    n = kernel.grid.n
    return np.fft.irfft(np.fft.rfft(u, axis=-1) * kernel.spectrum[: n // 2 + 1], n=n, axis=-1)


def convolve_quadrature(u_grid, grid: LogGrid, params: MarketParams, width: float = 10.0):
    """Direct trapezoid evaluation of the jump integral, one node at a time.

    ``u`` is linearly interpolated between nodes and held constant beyond the
    grid ends.  Jump sizes run over ``mu_j +- width * sigma_j`` on a lattice
    aligned with the grid.
    """
    u = np.asarray(u_grid, dtype=float)
    if u.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} grid values, got {u.shape}")
    dx = grid.dx
    m_lo = math.floor((params.mu_j - width * params.sigma_j) / dx)
    m_hi = math.ceil((params.mu_j + width * params.sigma_j) / dx)
    y = dx * np.arange(m_lo, m_hi + 1)
    w = log_jump_density(y, params) * dx
    w[0] *= 0.5
    w[-1] *= 0.5
    xs = grid.nodes
    out = np.empty(grid.n)
    for i in range(grid.n):
        out[i] = np.dot(np.interp(xs[i] + y, xs, u), w)
    return out


def extend_call_field(grid: LogGrid, u_grid, t: float, params: MarketParams):
    """Replace values outside [ln s_min, ln s_max] by the call asymptotics.

    Left of the domain the price is 0, right of it ``e^x - K e^{-r(T-t)}``.
    """
    u = np.array(u_grid, dtype=float)
    x = grid.nodes
    u[x < params.x_min] = 0.0
    right = x > params.x_max
    u[right] = np.exp(x[right]) - params.strike * math.exp(-params.r * (params.maturity - t))
    return u


def lagrange4(grid: LogGrid, x):
    """Indices (m, 4) and weights (m, 4) of 4-point Lagrange interpolation."""
    x = np.asarray(x, dtype=float).reshape(-1)
    s = (x - grid.x_lo) / grid.dx
    i0 = np.floor(s).astype(int) - 1
    if np.any(i0 < 0) or np.any(i0 + 3 > grid.n - 1):
        raise ValueError("interpolation point outside padded grid")
    f = s - (i0 + 1)  # position relative to node i0+1, in [0, 1)
    w = np.column_stack([
        -f * (f - 1) * (f - 2) / 6,
        (f + 1) * (f - 1) * (f - 2) / 2,
        -(f + 1) * f * (f - 2) / 2,
        (f + 1) * f * (f - 1) / 6,
    ])
    idx = i0[:, None] + np.arange(4)
    return idx, w


def convolved_design_matrix(family: WaveletFamily, grid: LogGrid, kernel: KernelSpectrum, points):
    """Jump integral of every atom at every point: ``WJ[p, i]``.

    Atoms are separable, so only each distinct x-profile is convolved; the
    result is interpolated to the points and multiplied by the atom's
    t-profile there.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x = pts[:, 0]
    t = pts[:, 1]
    if kernel.grid != grid:
        raise ValueError("kernel was built on a different grid")
    lo, hi = family.x_support()
    r = kernel.reach
    if x.min() - r < grid.x_lo or x.max() + r > grid.x_hi or lo < grid.x_lo or hi > grid.x_hi:
        raise ValueError("points or atom supports fall outside the padded grid")

    jx, kx = family.profiles[:, :1], family.profiles[:, 1:]
    gx, _, _ = _profile(jx * grid.nodes - kx)
    conv = convolve_fft(gx, kernel)  # (n_profiles, n)
    idx, w = lagrange4(grid, x)
    at_points = np.einsum("pk,qpk->pq", w, conv[:, idx])  # (n_points, n_profiles)
    gt, _, _ = _profile(family.j_t * t[:, None] - family.k_t)
    return at_points[:, family.profile_index] * gt
