"""PIDE residual and composite loss as an affine map of the coefficients.

The surrogate ``u = W c + b`` is linear in its parameters, so every residual
is ``A z - y`` with ``z = (c, b)`` and the weighted loss is an exact
quadratic.  All blocks are stacked into one scaled least-squares system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .jumps import KernelSpectrum, LogGrid, convolved_design_matrix
from .market import MarketParams, payoff_call
from .sampling import TrainingSets
from .wavelets import DesignMatrices, WaveletFamily, design_matrices

DEFAULT_RIDGE_SCALE = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LossWeights:
    pde: float = 1.0
    ic: float = 5000.0
    bc: float = 10.0

    def __post_init__(self):
        if min(self.pde, self.ic, self.bc) < 0:
            raise ValueError("loss weights must be nonnegative")


def _drift(params: MarketParams, compensated: bool) -> float:
    return params.r - params.lam * params.kappa if compensated else params.r


def pide_operator(params: MarketParams, m: DesignMatrices, WJ: np.ndarray,
                  compensated: bool = True) -> np.ndarray:
    """Residual matrix of the S-space PIDE at the matrices' points.

    With S = e^x the chain rule gives ``S V_S = u_x`` and
    ``S^2 V_SS = u_xx - u_x``.  ``compensated`` subtracts ``lam * kappa``
    from the drift of ``S V_S`` so the equation prices the same martingale
    model as the simulator and the reference pricers.
    """
    r, s2, lam = params.r, params.sigma**2, params.lam
    s_vs = m.DxW
    s2_vss = m.DxxW - m.DxW
    return m.DtW + 0.5 * s2 * s2_vss + _drift(params, compensated) * s_vs - (r + lam) * m.W + lam * WJ


def pide_operator_log(params: MarketParams, m: DesignMatrices, WJ: np.ndarray,
                      compensated: bool = True) -> np.ndarray:
    """Same residual written directly in log-price form."""
    r, s2, lam = params.r, params.sigma**2, params.lam
    mu = _drift(params, compensated)
    return 0.5 * s2 * m.DxxW + (mu - 0.5 * s2) * m.DxW + m.DtW - (r + lam) * m.W + lam * WJ


def boundary_target(params: MarketParams, boundary: np.ndarray) -> np.ndarray:
    x, t = boundary[:, 0], boundary[:, 1]
    upper = np.exp(x) - params.strike * np.exp(-params.r * (params.maturity - t))
    return np.where(np.isclose(x, params.x_min), 0.0, upper)


@dataclass(frozen=True)
class ResidualSystem:
    """Stacked, weight-scaled system; the loss is ``||M z - y||^2``.

    Unscaled blocks are kept for diagnostics.  The PDE block's bias column is
    the constant ``-r`` (the jump integral of a constant is that constant).
    """

    A_pde: np.ndarray
    r_pde: float
    A_ic: np.ndarray
    target_ic: np.ndarray
    A_bc: np.ndarray
    target_bc: np.ndarray
    weights: LossWeights
    M: np.ndarray
    y: np.ndarray
    ridge: float = 0.0

    @property
    def n_atoms(self) -> int:
        return self.A_pde.shape[1]

    def split(self, c, b):
        """Unweighted residual vectors (pde, ic, bc) at (c, b)."""
        return (
            self.A_pde @ c + self.r_pde * b,
            self.A_ic @ c + b - self.target_ic,
            self.A_bc @ c + b - self.target_bc,
        )

    def loss_terms(self, c, b) -> dict:
        pde, ic, bc = self.split(c, b)
        return {"pde": float(np.mean(pde**2)), "ic": float(np.mean(ic**2)), "bc": float(np.mean(bc**2))}


def _stack(A_pde, r_pde, A_ic, t_ic, A_bc, t_bc, w: LossWeights):
    blocks, rhs = [], []
    for A, bias, target, weight in (
        (A_pde, r_pde, np.zeros(len(A_pde)), w.pde),
        (A_ic, 1.0, t_ic, w.ic),
        (A_bc, 1.0, t_bc, w.bc),
    ):
        s = math.sqrt(weight / len(A))
        blocks.append(np.hstack([s * A, np.full((len(A), 1), s * bias)]))
        rhs.append(s * target)
    return np.vstack(blocks), np.concatenate(rhs)


def assemble(params: MarketParams, family: WaveletFamily, sets: TrainingSets, grid: LogGrid,
             kernel: KernelSpectrum, weights: LossWeights | None = None,
             compensated: bool = True, ridge_scale: float = DEFAULT_RIDGE_SCALE) -> ResidualSystem:
    """Build the stacked system on the training sets.

    The objective shared by the direct solve and the trainer is
    ``loss + ridge * ||c||^2`` with ``ridge = ridge_scale * trace(M_c^T M_c)``.
    """
    w = weights or LossWeights()
    colloc = design_matrices(family, sets.collocation)
    WJ = convolved_design_matrix(family, grid, kernel, sets.collocation)
    A_pde = pide_operator(params, colloc, WJ, compensated)
    A_ic = design_matrices(family, sets.terminal).W
    t_ic = payoff_call(sets.terminal[:, 0], params.strike)
    A_bc = design_matrices(family, sets.boundary).W
    t_bc = boundary_target(params, sets.boundary)
    M, y = _stack(A_pde, -params.r, A_ic, t_ic, A_bc, t_bc, w)
    if not (np.all(np.isfinite(M)) and np.all(np.isfinite(y))):
        raise FloatingPointError("non-finite entries in assembled system")
    system = ResidualSystem(A_pde, -params.r, A_ic, t_ic, A_bc, t_bc, w, M, y)
    if ridge_scale:
        system = replace(system, ridge=ridge_scale * trace_scale(system))
    return system


def loss_and_gradient(system: ResidualSystem, c, b: float):
    """Composite loss and its exact gradient with respect to c and b."""
    z = np.append(np.asarray(c, dtype=float), b)
    res = system.M @ z - system.y
    g = 2.0 * (system.M.T @ res)
    return float(res @ res), g[:-1], float(g[-1])


def trace_scale(system: ResidualSystem) -> float:
    """trace(M_c^T M_c): squared Frobenius norm of the coefficient columns."""
    Mc = system.M[:, :-1]
    return float(np.einsum("ij,ij->", Mc, Mc))


def objective(system: ResidualSystem, c, b: float):
    """Regularised objective ``loss + ridge * ||c||^2`` and its gradient."""
    c = np.asarray(c, dtype=float)
    loss, gc, gb = loss_and_gradient(system, c, b)
    return loss + system.ridge * float(c @ c), gc + 2.0 * system.ridge * c, gb


class GramObjective:
    """Objective evaluated through the normal equations.

    ``f(z) = z^T H z - 2 q^T z + y^T y`` with ``H = M^T M + ridge * I_c``.
    Each call costs O(n^2) instead of O(rows * n); values agree with
    :func:`objective` to rounding.
    """

    def __init__(self, system: ResidualSystem):
        M, y = system.M, system.y
        self.H = M.T @ M
        n = self.H.shape[0]
        self.H[np.arange(n - 1), np.arange(n - 1)] += system.ridge
        self.q = M.T @ y
        self.yy = float(y @ y)

    def __call__(self, z):
        # overflow surfaces as a non-finite loss, which the optimisers report as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            Hz = self.H @ z
            return float(z @ Hz - 2.0 * (self.q @ z) + self.yy), 2.0 * (Hz - self.q)


def solve_least_squares(system: ResidualSystem, ridge: float | None = None):
    """Exact minimiser of ``loss + ridge * ||c||^2`` (``ridge`` defaults to the system's).

    Solved by an SVD-based least-squares factorisation of the stacked system
    with ridge rows appended, plus one refinement step.  ``ridge=0`` raises
    :class:`RankDeficientError` when the system is singular.
    """
    ridge = system.ridge if ridge is None else ridge
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    M, y = system.M, system.y
    n = M.shape[1]
    if ridge > 0:
        R = np.zeros((n - 1, n))
        R[:, :-1] = math.sqrt(ridge) * np.eye(n - 1)
        M = np.vstack([M, R])
        y = np.concatenate([y, np.zeros(n - 1)])
    z, _, rank, _ = scipy.linalg.lstsq(M, y, lapack_driver="gelsd")
    if ridge == 0 and rank < n:
        raise RankDeficientError(f"system has rank {rank} < {n} unknowns; use ridge > 0")
    dz, *_ = scipy.linalg.lstsq(M, y - M @ z, lapack_driver="gelsd")
    z = z + dz
    return z[:-1], float(z[-1])
