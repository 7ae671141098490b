"""Trained surrogate ``u(x, t) = W(x, t) c + b`` and its text serialisation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .market import MarketParams
from .wavelets import WaveletFamily, _profile, design_matrices, evaluate_solution

FORMAT = "jumpwave-solution/1"
# slack when testing whether a query lies in the trained domain
DOMAIN_TOL = 1e-9
# points per design-matrix block when evaluating many queries
EVAL_CHUNK = 4096


class DomainError(ValueError):
    """Query point outside the trained (x, t) rectangle."""


@dataclass(frozen=True)
class Solution:
    params: MarketParams
    family: WaveletFamily
    c: np.ndarray
    b: float

    def __post_init__(self):
        if np.shape(self.c) != (len(self.family),):
            raise ValueError(f"expected {len(self.family)} coefficients, got shape {np.shape(self.c)}")

    def _points(self, spot, time) -> np.ndarray:
        s, t = np.broadcast_arrays(np.asarray(spot, dtype=float), np.asarray(time, dtype=float))
        s, t = s.reshape(-1), t.reshape(-1)
        if np.any(s <= 0):
            raise DomainError("spot must be positive")
        x = np.log(s)
        p = self.params
        bad = ((x < p.x_min - DOMAIN_TOL) | (x > p.x_max + DOMAIN_TOL)
               | (t < -DOMAIN_TOL) | (t > p.maturity + DOMAIN_TOL))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DomainError(
                f"(S={s[i]:g}, t={t[i]:g}) outside trained domain "
                f"S in [{p.s_min:g}, {p.s_max:g}], t in [0, {p.maturity:g}]"
            )
        return np.column_stack([x, t])

    def log_fields(self, spot, time):
        """(u, u_t, u_x, u_xx) at the given spots and calendar times."""
        pts = self._points(spot, time)
        parts = [evaluate_solution(self.c, self.b, design_matrices(self.family, pts[i:i + EVAL_CHUNK]))
                 for i in range(0, len(pts), EVAL_CHUNK)]
        return tuple(np.concatenate(f) for f in zip(*parts))

    def price(self, spot, time):
        """Surrogate option value; scalar in, scalar out."""
        shape = np.broadcast(np.asarray(spot), np.asarray(time)).shape
        if np.ndim(time) == 0:
            u = self._values_at_time(spot, float(time))
        else:
            u = self.log_fields(spot, time)[0]
        return u.reshape(shape)[()]

    def _values_at_time(self, spot, time: float) -> np.ndarray:
        """Values only, at one time: fold the t-profiles into per-x-profile weights."""
        pts = self._points(spot, time)
        f = self.family
        gt = _profile(f.j_t * time - f.k_t)[0]
        w = np.bincount(f.profile_index, weights=self.c * gt, minlength=len(f.profiles))
        jx, kx = f.profiles[:, 0], f.profiles[:, 1]
        x = pts[:, :1]
        return np.concatenate([_profile(jx * x[i:i + EVAL_CHUNK] - kx)[0] @ w + self.b
                               for i in range(0, len(x), EVAL_CHUNK)])

    def to_dict(self) -> dict:
        f = self.family
        return {
            "format": FORMAT,
            "params": self.params.to_dict(),
            "b": float(self.b),
            "c": [float(v) for v in self.c],
            "atoms": {"j_x": f.j_x.tolist(), "k_x": f.k_x.tolist(),
                      "j_t": f.j_t.tolist(), "k_t": f.k_t.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Solution":
        if d.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} document")
        a = d["atoms"]
        family = WaveletFamily.from_arrays(a["j_x"], a["k_x"], a["j_t"], a["k_t"])
        b = float(d["b"])
        if not math.isfinite(b):
            raise ValueError("non-finite bias")
        return cls(MarketParams(**d["params"]), family, np.asarray(d["c"], dtype=float), b)

    def save(self, path) -> Path:
        """Write as JSON; floats round-trip exactly, so bytes are reproducible."""
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), separators=(",", ":")) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "Solution":
        return cls.from_dict(json.loads(Path(path).read_text()))
