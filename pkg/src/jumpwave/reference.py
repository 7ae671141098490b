"""Independent reference pricers for European calls under the Merton model.

Three routes are provided so they can check each other: the Poisson mixture
of Black-Scholes prices, Carr-Madan FFT inversion of the characteristic
function, and plain Monte Carlo on exact terminal draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr
from scipy.stats import poisson

from .market import MarketParams, payoff_call, simulate_terminal_arrays

SERIES_TAIL = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PriceQuote:
    spot: float
    time: float
    price: float
    method: str
    stderr: float = 0.0


def black_scholes_call(spot, strike, r, sigma, tau):
    """Black-Scholes call price; vectorised over all arguments.

    ``tau == 0`` returns the payoff and ``sigma == 0`` the discounted
    forward intrinsic value.
    """
    spot, strike, r, sigma, tau = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, r, sigma, tau))
    )
    shape = spot.shape
    disc_k = strike * np.exp(-r * tau)
    sd = sigma * np.sqrt(tau)
    out = np.array(np.maximum(spot - disc_k, 0.0), ndmin=1)
    spot, disc_k, sd = (np.array(a, ndmin=1) for a in (spot, disc_k, sd))
    live = sd > 0
    if np.any(live):
        s, k, v = spot[live], disc_k[live], sd[live]
        d1 = np.log(s / k) / v + 0.5 * v
        out[live] = s * ndtr(d1) - k * ndtr(d1 - v)
    return out.reshape(shape)[()]


def series_terms(params: MarketParams, tau: float) -> int:
    """Smallest truncation whose Poisson tail mass is below ``SERIES_TAIL``."""
    mean = params.lam * (1.0 + params.kappa) * tau
    n = 0
    while poisson.sf(n, mean) >= SERIES_TAIL:
        n += 1
    return n


def merton_series_call(params: MarketParams, spot, tau: float, n_terms: int | None = None,
                       strike=None):
    """Merton's closed form: Poisson-weighted Black-Scholes prices.

    Conditioning on n jumps gives a lognormal terminal law with variance
    ``sigma^2 + n sigma_j^2 / tau`` and a drift adjusted so that the
    discounted price stays a martingale.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    strike = params.strike if strike is None else strike
    lam_p = params.lam * (1.0 + params.kappa)
    needed = series_terms(params, tau)
    if n_terms is None:
        n_terms = needed
    elif n_terms < needed:
        raise ValueError(
            f"n_terms={n_terms} leaves Poisson tail {poisson.sf(n_terms, lam_p * tau):.2e}"
            f" > {SERIES_TAIL:g}; need at least {needed}"
        )
    spot = np.asarray(spot, dtype=float)
    strike = np.asarray(strike, dtype=float)
    total = np.zeros(np.broadcast(spot, strike).shape)
    jump_drift = params.mu_j + 0.5 * params.sigma_j**2
    for n in range(n_terms + 1):
        w = poisson.pmf(n, lam_p * tau)
        sig_n = math.sqrt(params.sigma**2 + n * params.sigma_j**2 / tau)
        r_n = params.r - params.lam * params.kappa + n * jump_drift / tau
        total += w * black_scholes_call(spot, strike, r_n, sig_n, tau)
    return total[()] if total.ndim == 0 else total


def characteristic_function(params: MarketParams, nu, tau: float, spot: float = 1.0):
    """E[exp(i nu ln S_tau)] under the risk-neutral measure; ``nu`` may be complex."""
    nu = np.asarray(nu, dtype=complex)
    drift = math.log(spot) + (params.r - 0.5 * params.sigma**2 - params.lam * params.kappa) * tau
    jump = np.exp(1j * nu * params.mu_j - 0.5 * nu**2 * params.sigma_j**2) - 1.0
    return np.exp(1j * nu * drift - 0.5 * params.sigma**2 * nu**2 * tau + params.lam * tau * jump)


def _carr_madan_grid(params, spot, tau, alpha, n_fft, eta):
    lam_k = 2.0 * math.pi / (n_fft * eta)
    b = 0.5 * n_fft * lam_k
    k0 = math.log(spot)
    j = np.arange(n_fft)
    v = eta * j
    # damped call transform
    psi = math.exp(-params.r * tau) * characteristic_function(params, v - (alpha + 1) * 1j, tau, spot) / (
        alpha**2 + alpha - v**2 + 1j * (2 * alpha + 1) * v
    )
    simpson = (3.0 + (-1.0) ** (j + 1)) / 3.0
    simpson[0] = 1.0 / 3.0
    x = np.exp(-1j * v * (k0 - b)) * psi * eta * simpson
    ks = k0 - b + lam_k * j
    calls = np.exp(-alpha * ks) / math.pi * np.fft.fft(x).real
    return ks, calls


def carr_madan_call(params: MarketParams, spot: float, tau: float, strike=None, alpha: float = 1.5,
                    n_fft: int = 4096, eta: float = 0.25, check: bool = True, return_grid: bool = False):
    """Carr-Madan FFT call price at ``strike`` (defaults to the contract strike).

    With ``check`` the grid is refined once (n_fft doubled) and a
    :class:`ConvergenceError` raised if any requested price moves by more
    than 1e-6.  ``return_grid`` also returns the (strikes, prices) grid.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ValueError("n_fft must be a power of two")
    strike = params.strike if strike is None else strike
    logk = np.log(np.asarray(strike, dtype=float))

    def price_on(n):
        ks, calls = _carr_madan_grid(params, spot, tau, alpha, n, eta)
        lo = np.searchsorted(ks, logk.min()) - 8
        hi = np.searchsorted(ks, logk.max()) + 8
        if lo < 0 or hi > n:
            raise ValueError("strike outside Carr-Madan log-strike grid")
        spline = CubicSpline(ks[lo:hi], calls[lo:hi])
        return ks, calls, spline(logk)

    ks, calls, price = price_on(n_fft)
    if check:
        _, _, fine = price_on(2 * n_fft)
        drift = float(np.max(np.abs(fine - price)))
        if drift > 1e-6:
            raise ConvergenceError(f"Carr-Madan price moved {drift:.2e} under grid refinement")
    price = price[()] if price.ndim == 0 else price
    if return_grid:
        return price, (np.exp(ks), calls)
    return price


def monte_carlo_call(params: MarketParams, spot: float, tau: float, n_paths: int, seed: int,
                     strike=None) -> tuple[float, float]:
    """Discounted mean payoff and its standard error."""
    strike = params.strike if strike is None else strike
    s_t, _ = simulate_terminal_arrays(params.replace(maturity=max(tau, params.maturity)), spot, tau,
                                      n_paths, seed)
    pay = math.exp(-params.r * tau) * payoff_call(np.log(s_t), strike)
    return float(pay.mean()), float(pay.std(ddof=1) / math.sqrt(n_paths))


def reference_price(params: MarketParams, spot: float, tau: float, method: str = "series",
                    n_paths: int = 1_000_000, seed: int = 0) -> PriceQuote:
    """Price one (spot, time-to-maturity) pair with the named method."""
    t = params.maturity - tau
    if method == "series":
        return PriceQuote(spot, t, float(merton_series_call(params, spot, tau)), method)
    if method == "carr-madan":
        return PriceQuote(spot, t, float(carr_madan_call(params, spot, tau)), method)
    if method == "bs":
        return PriceQuote(spot, t, float(black_scholes_call(spot, params.strike, params.r, params.sigma, tau)),
                          method)
    if method == "mc":
        p, se = monte_carlo_call(params, spot, tau, n_paths, seed)
        return PriceQuote(spot, t, p, method, se)
    raise ValueError(f"unknown method {method!r}")
