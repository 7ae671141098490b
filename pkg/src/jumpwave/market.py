"""Merton jump-diffusion market: parameters, jump law, payoff and exact path sampling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

# Paths per RNG stream; fixed so results do not depend on how work is split.
SIM_CHUNK = 1 << 18


@dataclass(frozen=True)
class MarketParams:
    """Risk-neutral Merton model with a truncated spatial domain.

    ``lam`` is the jump intensity per year; log jump sizes are
    Normal(``mu_j``, ``sigma_j``) with ``sigma_j`` a standard deviation.
    """

    r: float
    sigma: float
    strike: float
    maturity: float
    lam: float
    mu_j: float
    sigma_j: float
    s_min: float
    s_max: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.sigma_j <= 0:
            raise ValueError("sigma_j must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.strike <= 0 or self.maturity <= 0:
            raise ValueError("strike and maturity must be positive")
        if not 0 < self.s_min < self.strike < self.s_max:
            raise ValueError("need 0 < s_min < strike < s_max")

    @property
    def kappa(self) -> float:
        """Jump compensator E[Y] - 1."""
        return math.expm1(self.mu_j + 0.5 * self.sigma_j**2)

    @property
    def x_min(self) -> float:
        return math.log(self.s_min)

    @property
    def x_max(self) -> float:
        return math.log(self.s_max)

    def replace(self, **changes) -> "MarketParams":
        d = asdict(self)
        d.update(changes)
        return MarketParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PathSample:
    terminal_price: float
    jump_count: int


def log_jump_density(y, params: MarketParams):
    """Normal density of the log jump size, evaluated elementwise at ``y``."""
    z = (np.asarray(y, dtype=float) - params.mu_j) / params.sigma_j
    return np.exp(-0.5 * z * z) / (params.sigma_j * math.sqrt(2.0 * math.pi))


def payoff_call(x, strike: float):
    """Call payoff max(e^x - K, 0) on log-prices."""
    return np.maximum(np.exp(np.asarray(x, dtype=float)) - strike, 0.0)


def simulate_terminal_arrays(
    params: MarketParams, s0: float, horizon: float, n_paths: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact draws of (S_h, N_h) under the risk-neutral measure.

    Work is cut into fixed-size chunks, each with its own stream spawned from
    ``seed``, so output is independent of any worker partitioning.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if horizon > params.maturity * (1 + 1e-12):
        raise ValueError("horizon exceeds maturity")
    if s0 <= 0:
        raise ValueError("s0 must be positive")

    h = horizon
    drift = (params.r - params.lam * params.kappa - 0.5 * params.sigma**2) * h
    vol = params.sigma * math.sqrt(h)
    n_chunks = -(-n_paths // SIM_CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)

    prices = np.empty(n_paths)
    counts = np.empty(n_paths, dtype=np.int64)
    for c, ss in enumerate(streams):
        lo = c * SIM_CHUNK
        m = min(SIM_CHUNK, n_paths - lo)
        rng = np.random.Generator(np.random.Philox(ss))
        z = rng.standard_normal(m)
        n = rng.poisson(params.lam * h, m)
        # sum of n iid normals is exactly Normal(n*mu, n*sigma_j^2)
        jumps = n * params.mu_j + np.sqrt(n) * params.sigma_j * rng.standard_normal(m)
        prices[lo:lo + m] = s0 * np.exp(drift + vol * z + jumps)
        counts[lo:lo + m] = n
    return prices, counts


def simulate_terminal(
    params: MarketParams, s0: float, horizon: float, n_paths: int, seed: int
) -> list[PathSample]:
    prices, counts = simulate_terminal_arrays(params, s0, horizon, n_paths, seed)
    return [PathSample(float(p), int(n)) for p, n in zip(prices, counts)]
