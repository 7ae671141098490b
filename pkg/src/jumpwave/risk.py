"""Greeks from the surrogate, simulated P&L losses, VaR/CVaR and pricing error."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .market import MarketParams, simulate_terminal_arrays
from .solution import Solution

DEFAULT_HORIZON = 10.0 / 252.0
DEFAULT_LEVEL = 0.99
QUANTILES = (0.01, 0.05, 0.5, 0.95, 0.99)

Pricer = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class GreeksAt:
    spot: float
    time: float
    delta: float
    gamma: float
    theta: float  # dV/dt in calendar time, per year


def greeks_scan(solution: Solution, spots, time: float) -> dict[str, np.ndarray]:
    """Price, delta, gamma and theta along a spot scan at one calendar time.

    ``S V_S = u_x`` and ``S^2 V_SS = u_xx - u_x`` convert log-space
    derivatives to spot sensitivities.
    """
    s = np.asarray(spots, dtype=float).reshape(-1)
    u, u_t, u_x, u_xx = solution.log_fields(s, time)
    return {"spot": s, "price": u, "delta": u_x / s, "gamma": (u_xx - u_x) / s**2, "theta": u_t}


def greeks(solution: Solution, spot: float, time: float) -> GreeksAt:
    """Chain-rule Greeks at one point; raises DomainError outside the trained domain."""
    g = greeks_scan(solution, [spot], time)
    return GreeksAt(float(spot), float(time), float(g["delta"][0]), float(g["gamma"][0]),
                    float(g["theta"][0]))


def extended_pricer(solution: Solution) -> Pricer:
    """Surrogate pricer that falls back to the call asymptotics outside [s_min, s_max].

    Below the domain the value is 0 and above it ``S - K e^{-r(T-t)}``, the
    same values the boundary conditions enforce at the edges.
    """
    p = solution.params

    def price(spots, t):
        s = np.asarray(spots, dtype=float)
        out = np.zeros_like(s)
        hi = s > p.s_max
        out[hi] = s[hi] - p.strike * math.exp(-p.r * (p.maturity - t))
        inside = ~hi & (s >= p.s_min)
        if np.any(inside):
            out[inside] = solution.price(s[inside], t)
        return out

    return price


def pnl_losses(params: MarketParams, pricer: Pricer | Solution, spot0: float, horizon: float,
               n_paths: int, seed: int, t0: float = 0.0) -> np.ndarray:
    """Losses of a long one-call position over ``horizon`` years.

    ``L_i = V(spot0, t0) - e^{-r h} V(S_h_i, t0 + h)`` with ``S_h`` drawn by
    the exact simulator.  A :class:`Solution` is wrapped by
    :func:`extended_pricer`.
    """
    if not 0 < horizon < params.maturity - t0:
        raise ValueError("horizon must lie in (0, T - t0)")
    if isinstance(pricer, Solution):
        pricer = extended_pricer(pricer)
    s_h, _ = simulate_terminal_arrays(params, spot0, horizon, n_paths, seed)
    v0 = float(np.asarray(pricer(np.array([spot0]), t0)).reshape(-1)[0])
    v_h = np.asarray(pricer(s_h, t0 + horizon), dtype=float)
    return v0 - math.exp(-params.r * horizon) * v_h


def var_cvar(losses, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    """Empirical VaR (order statistic ``ceil(level * n)``) and CVaR (mean of losses >= VaR)."""
    x = np.sort(np.asarray(losses, dtype=float).reshape(-1))
    n = len(x)
    if n == 0:
        raise ValueError("no loss samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    k = min(max(math.ceil(level * n), 1), n)
    var = float(x[k - 1])
    # sorted, so the tail at or above var is a suffix
    first = int(np.searchsorted(x, var, side="left"))
    return var, float(x[first:].mean())


def mean_relative_error(model_prices, reference_prices) -> float:
    """``100 * mean(|model - ref| / ref)``, in percent."""
    m = np.asarray(model_prices, dtype=float).reshape(-1)
    r = np.asarray(reference_prices, dtype=float).reshape(-1)
    if m.shape != r.shape or len(r) == 0:
        raise ValueError("need two nonempty vectors of equal length")
    if np.any(r <= 0):
        raise ValueError("reference prices must be positive")
    return float(100.0 * np.mean(np.abs(m - r) / r))


@dataclass
class RiskReport:
    scenario: str
    mean_relative_error_pct: float
    var99: float
    cvar99: float
    n_paths: int
    seed: int
    level: float = DEFAULT_LEVEL
    horizon: float = DEFAULT_HORIZON
    quantiles: dict[str, float] = field(default_factory=dict)

    CSV_HEADER = ("scenario,mean_relative_error_pct,var99,cvar99,level,horizon_years,"
                  "n_paths,seed")

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> str:
        return (f"{self.scenario},{self.mean_relative_error_pct:.6f},{self.var99:.6f},"
                f"{self.cvar99:.6f},{self.level},{self.horizon:.8f},{self.n_paths},{self.seed}")


def risk_report(scenario: str, losses, model_prices, reference_prices, seed: int,
                level: float = DEFAULT_LEVEL, horizon: float = DEFAULT_HORIZON) -> RiskReport:
    losses = np.asarray(losses, dtype=float)
    var, cvar = var_cvar(losses, level)
    qs = {f"q{round(100 * q):02d}": float(np.quantile(losses, q, method="higher")) for q in QUANTILES}
    return RiskReport(scenario, mean_relative_error(model_prices, reference_prices), var, cvar,
                      int(losses.size), seed, level, horizon, qs)
