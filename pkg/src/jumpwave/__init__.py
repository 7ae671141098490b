"""Merton jump-diffusion option pricing by wavelet collocation of the pricing PIDE."""

from .market import MarketParams, simulate_terminal
from .reference import black_scholes_call, carr_madan_call, merton_series_call
from .risk import greeks, mean_relative_error, pnl_losses, var_cvar
from .solution import Solution
from .trainer import TrainConfig, fit
from .wavelets import FamilyConfig, build_family

__version__ = "0.1.0"

__all__ = [
    "FamilyConfig", "MarketParams", "Solution", "TrainConfig", "black_scholes_call",
    "build_family", "carr_madan_call", "fit", "greeks", "mean_relative_error",
    "merton_series_call", "pnl_losses", "simulate_terminal", "var_cvar",
]
