"""Three-stage coefficient optimisation: Adam, clipped Adam refinement, L-BFGS.

All optimisers work on a flat parameter vector ``z = (c, b)`` and a callable
returning ``(loss, gradient)``.  Steps are full batch.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .jumps import LogGrid, precompute_kernel
from .market import MarketParams
from .residual import (DEFAULT_RIDGE_SCALE, GramObjective, LossWeights, ResidualSystem, assemble,
                       objective)
from .sampling import TrainingSets
from .solution import Solution
from .wavelets import WaveletFamily

LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


class DivergenceError(FloatingPointError):
    """Raised when the loss becomes non-finite."""


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-2
    epochs: int = 5000
    patience: int = 200
    factor: float = 0.5
    min_lr: float = 1e-8
    clip_norm: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 0:
            raise ValueError("Adam needs lr > 0 and epochs >= 0")
        if not 0 < self.factor < 1:
            raise ValueError("plateau factor must lie in (0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


@dataclass(frozen=True)
class LBFGSConfig:
    max_iter: int = 5000
    history: int = 20
    c1: float = 1e-4
    c2: float = 0.9
    tol: float = 1e-10
    max_ls: int = 40

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.history < 1:
            raise ValueError("history must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    stage1: AdamConfig = AdamConfig()
    stage2: AdamConfig = AdamConfig(lr=1e-4, epochs=2000, clip_norm=1.0)
    stage3: LBFGSConfig = LBFGSConfig()
    seed: int = 0

    def __post_init__(self):
        if not self.stage2.lr < self.stage1.lr:
            raise ValueError("refinement learning rate must be below the stage-1 rate")
        if self.stage2.clip_norm is None:
            raise ValueError("refinement stage needs a clip norm")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            stage1=AdamConfig(**d.get("stage1", {})),
            stage2=AdamConfig(**{"lr": 1e-4, "epochs": 2000, "clip_norm": 1.0, **d.get("stage2", {})}),
            stage3=LBFGSConfig(**d.get("stage3", {})),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class StageResult:
    z: np.ndarray
    loss: float
    history: list[float]
    reason: str
    lr_trace: list[tuple[int, float]] = field(default_factory=list)
    seconds: float = 0.0
    steps: list[dict] = field(default_factory=list)


@dataclass
class TrainReport:
    stages: dict[str, StageResult]
    initial_loss: float

    @property
    def history(self) -> list[float]:
        return [v for s in self.stages.values() for v in s.history]

    @property
    def best_loss(self) -> float:
        return min(self.history) if self.history else self.initial_loss

    def to_dict(self, timings: bool = True) -> dict:
        """JSON-ready summary; ``timings=False`` drops wall times for reproducible bytes."""
        stages = {}
        for name, s in self.stages.items():
            d = {
                "final_loss": float(s.loss),
                "epochs": len(s.history),
                "termination": s.reason,
                "lr_trace": [[int(e), float(lr)] for e, lr in s.lr_trace],
            }
            if timings:
                d["seconds"] = round(s.seconds, 3)
            stages[name] = d
        return {"initial_loss": float(self.initial_loss), "best_loss": float(self.best_loss),
                "stages": stages}


def init_parameters(n_atoms: int, seed: int) -> tuple[np.ndarray, float]:
    """Xavier-uniform coefficients (fan_in=n_atoms, fan_out=1) and bias 0.5."""
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    bound = math.sqrt(6.0 / (n_atoms + 1))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.uniform(-bound, bound, n_atoms), 0.5


def _check(loss: float, stage: str, epoch: int):
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss in {stage} at step {epoch}")


def adam_stage(loss_fn: LossFn, start, cfg: AdamConfig, name: str = "adam") -> StageResult:
    """Full-batch Adam with optional global-norm clipping and plateau LR decay.

    The learning rate is multiplied by ``cfg.factor`` whenever the best loss
    has not improved by a relative 1e-8 for ``cfg.patience`` epochs.  The
    best iterate seen is returned, not the last one.
    """
    t0 = time.perf_counter()
    z = np.array(start, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite starting point")
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    lr = cfg.lr
    best_z, best = z.copy(), math.inf
    since = 0
    history: list[float] = []
    lr_trace = [(0, lr)]
    steps: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        loss, g = loss_fn(z)
        _check(loss, name, epoch)
        history.append(loss)
        if loss < best * (1 - 1e-8) or best == math.inf:
            since = 0
        else:
            since += 1
        if loss < best:
            best, best_z = loss, z.copy()
        if since >= cfg.patience and lr > cfg.min_lr:
            lr = max(lr * cfg.factor, cfg.min_lr)
            lr_trace.append((epoch, lr))
            since = 0
        if cfg.clip_norm is not None:
            gn = float(np.linalg.norm(g))
            if gn > cfg.clip_norm:
                g = g * (cfg.clip_norm / gn)
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**epoch)
        vhat = v / (1 - cfg.beta2**epoch)
        step = lr * mhat / (np.sqrt(vhat) + cfg.eps)
        if epoch == 1:
            steps.append({"grad_norm": float(np.linalg.norm(g)), "step": step.copy()})
        z = z - step
    # the final update has not been scored yet
    loss, _ = loss_fn(z)
    _check(loss, name, cfg.epochs + 1)
    if loss < best:
        best, best_z = loss, z.copy()
    return StageResult(best_z, best, history, "epochs", lr_trace, time.perf_counter() - t0, steps)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through two points with slopes, or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi, f0: float, g0: float, alpha0: float = 1.0, c1: float = 1e-4, c2: float = 0.9,
                 max_iter: int = 40, alpha_max: float = 1e10):
    """Line search returning ``(alpha, f, g, payload)`` satisfying strong Wolfe, or None.

    ``phi(alpha)`` returns ``(f, slope, payload)``.  Bracketing then zoom with
    safeguarded cubic interpolation.
    """
    if g0 >= 0:
        return None

    def ok_armijo(a, f):
        return f <= f0 + c1 * a * g0

    def zoom(lo, flo, glo, hi, fhi, ghi, budget):
        for _ in range(budget):
            trial = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            left, right = min(lo, hi), max(lo, hi)
            width = right - left
            if trial is None or not (left + 0.1 * width <= trial <= right - 0.1 * width):
                trial = 0.5 * (lo + hi)
            f, g, pay = phi(trial)
            if not ok_armijo(trial, f) or f >= flo:
                hi, fhi, ghi = trial, f, g
            else:
                if abs(g) <= -c2 * g0:
                    return trial, f, g, pay
                if g * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = trial, f, g
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None

    prev, fprev, gprev = 0.0, f0, g0
    alpha = alpha0
    for i in range(max_iter):
        f, g, pay = phi(alpha)
        if not math.isfinite(f):
            alpha = 0.5 * (prev + alpha)
            continue
        if not ok_armijo(alpha, f) or (i > 0 and f >= fprev):
            return zoom(prev, fprev, gprev, alpha, f, g, max_iter)
        if abs(g) <= -c2 * g0:
            return alpha, f, g, pay
        if g >= 0:
            return zoom(alpha, f, g, prev, fprev, gprev, max_iter)
        prev, fprev, gprev = alpha, f, g
        alpha = min(2.0 * alpha, alpha_max)
    return None


def lbfgs_stage(loss_fn: LossFn, start, cfg: LBFGSConfig, name: str = "lbfgs",
                record_steps: bool = False) -> StageResult:
    """L-BFGS (two-loop recursion) with a strong-Wolfe line search.

    Stops on gradient norm <= ``cfg.tol``, ``cfg.max_iter`` iterations, or a
    failed line search; the reason is recorded.  With ``record_steps`` each
    accepted step stores the data needed to re-check the Wolfe conditions.
    """
    t0 = time.perf_counter()
    z = np.array(start, dtype=float)
    f, g = loss_fn(z)
    _check(f, name, 0)
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho: list[float] = []
    history: list[float] = []
    steps: list[dict] = []
    reason = "max_iter"
    for it in range(1, cfg.max_iter + 1):
        if float(np.linalg.norm(g)) <= cfg.tol:
            reason = "gradient_tol"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, yv, r in zip(reversed(s_hist), reversed(y_hist), reversed(rho)):
            a = r * (s @ q)
            alphas.append(a)
            q -= a * yv
        if s_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            gamma = 1.0 / max(float(np.linalg.norm(g)), 1e-300)
        d = gamma * q
        for s, yv, r, a in zip(s_hist, y_hist, rho, reversed(alphas)):
            beta = r * (yv @ d)
            d += (a - beta) * s
        d = -d
        slope0 = float(g @ d)
        if slope0 >= 0:
            # lost descent; restart from steepest descent
            s_hist.clear(), y_hist.clear(), rho.clear()
            d = -g / max(float(np.linalg.norm(g)), 1e-300)
            slope0 = float(g @ d)

        def phi(a, z=z, d=d):
            fa, ga = loss_fn(z + a * d)
            return fa, float(ga @ d), ga

        found = strong_wolfe(phi, f, slope0, 1.0, cfg.c1, cfg.c2, cfg.max_ls)
        if found is None and s_hist:
            # retry once along steepest descent with fresh memory
            s_hist.clear(), y_hist.clear(), rho.clear()
            gn = max(float(np.linalg.norm(g)), 1e-300)
            d = -g / gn
            slope0 = -gn

            def phi(a, z=z, d=d):
                fa, ga = loss_fn(z + a * d)
                return fa, float(ga @ d), ga

            found = strong_wolfe(phi, f, slope0, 1.0 / gn, cfg.c1, cfg.c2, cfg.max_ls)
        if found is None:
            reason = "line_search_failed"
            break
        alpha, f_new, slope_new, g_new = found
        _check(f_new, name, it)
        step = alpha * d
        if record_steps:
            steps.append({"alpha": alpha, "f0": f, "f": f_new, "slope0": slope0, "slope": slope_new})
        yv = g_new - g
        sy = float(step @ yv)
        if sy > 1e-300:
            s_hist.append(step)
            y_hist.append(yv)
            rho.append(1.0 / sy)
            if len(s_hist) > cfg.history:
                s_hist.pop(0), y_hist.pop(0), rho.pop(0)
        z = z + step
        f, g = f_new, g_new
        history.append(f)
    return StageResult(z, f, history, reason, [], time.perf_counter() - t0, steps)


def system_loss_fn(system: ResidualSystem, gram: bool = True) -> LossFn:
    """Regularised objective of ``system`` as a function of ``z = (c, b)``.

    ``gram=True`` evaluates through the normal equations, which is much
    cheaper per call when rows outnumber unknowns.
    """
    if gram:
        return GramObjective(system)

    def fn(z):
        f, gc, gb = objective(system, z[:-1], z[-1])
        return f, np.append(gc, gb)
    return fn


def train(system: ResidualSystem, cfg: TrainConfig | None = None) -> tuple[np.ndarray, float, TrainReport]:
    """Run init -> Adam -> clipped Adam (warm start) -> L-BFGS on an assembled system.

    All stages minimise the system's regularised objective, the same one
    :func:`~jumpwave.residual.solve_least_squares` solves exactly.
    """
    cfg = cfg or TrainConfig()
    fn = system_loss_fn(system)
    c0, b0 = init_parameters(system.n_atoms, cfg.seed)
    z0 = np.append(c0, b0)
    initial, _ = fn(z0)
    _check(initial, "init", 0)
    s1 = adam_stage(fn, z0, cfg.stage1, "stage1")
    s2 = adam_stage(fn, s1.z, cfg.stage2, "stage2")
    start3 = s2.z if s2.loss <= s1.loss else s1.z
    s3 = lbfgs_stage(fn, start3, cfg.stage3, "stage3")
    best = min((s1, s2, s3), key=lambda s: s.loss)
    report = TrainReport({"stage1": s1, "stage2": s2, "stage3": s3}, initial)
    return best.z[:-1].copy(), float(best.z[-1]), report


def prepare_system(params: MarketParams, family: WaveletFamily, sets: TrainingSets,
                   weights: LossWeights | None = None, compensated: bool = True,
                   ridge_scale: float = DEFAULT_RIDGE_SCALE, grid_n: int = 2048) -> ResidualSystem:
    """Grid, kernel and assembled system for one training problem."""
    grid = LogGrid.for_family(family, params, n=grid_n)
    kernel = precompute_kernel(grid, params)
    return assemble(params, family, sets, grid, kernel, weights, compensated, ridge_scale)


def fit(params: MarketParams, family: WaveletFamily, sets: TrainingSets,
        cfg: TrainConfig | None = None, *, weights: LossWeights | None = None,
        compensated: bool = True, ridge_scale: float = DEFAULT_RIDGE_SCALE,
        system: ResidualSystem | None = None) -> tuple[Solution, TrainReport]:
    """Assemble, initialise and run the three stages; return the trained surrogate.

    A prebuilt ``system`` on the same inputs skips assembly.
    """
    if system is None:
        system = prepare_system(params, family, sets, weights, compensated, ridge_scale)
    elif system.n_atoms != len(family):
        raise ValueError("system and family disagree on the number of atoms")
    c, b, report = train(system, cfg)
    return Solution(params, family, c, b), report
