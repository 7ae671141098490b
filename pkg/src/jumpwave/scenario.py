"""Scenario files: INI-style key-value text holding market, family, training and risk settings.

Each ``[scenario.<id>]`` section inherits from ``[DEFAULT]``.  An optional
``[paper_scale]`` section lists overrides for the full-size configuration.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .market import MarketParams
from .residual import LossWeights
from .trainer import AdamConfig, LBFGSConfig, TrainConfig
from .wavelets import FamilyConfig

PREFIX = "scenario."
PAPER_SECTION = "paper_scale"

FLOAT_KEYS = {
    "r", "sigma", "strike", "maturity", "lam", "mu_j", "sigma_j", "s_min", "s_max",
    "jx_min", "jx_max", "jt_min", "jt_max", "spacing",
    "w_pde", "w_ic", "w_bc", "ridge_scale",
    "adam1_lr", "adam1_factor", "adam1_min_lr", "adam2_lr", "adam2_clip",
    "lbfgs_c1", "lbfgs_c2", "lbfgs_tol",
    "risk_horizon_days", "risk_level", "risk_spot", "risk_time",
}
INT_KEYS = {
    "margin", "max_atoms", "n_collocation", "n_terminal", "n_boundary", "grid_n",
    "adam1_epochs", "adam1_patience", "adam2_epochs", "adam2_patience",
    "lbfgs_max_iter", "lbfgs_history", "lbfgs_max_ls", "risk_paths", "seed",
}
BOOL_KEYS = {"compensated"}
TEXT_KEYS = {"provenance", "probes", "description"}
KNOWN_KEYS = FLOAT_KEYS | INT_KEYS | BOOL_KEYS | TEXT_KEYS
REQUIRED_KEYS = {"r", "sigma", "strike", "maturity", "lam", "mu_j", "sigma_j", "s_min", "s_max"}


class ScenarioError(ValueError):
    """Invalid scenario file; the message names file, line and field."""


@dataclass(frozen=True)
class RiskConfig:
    horizon_days: float = 10.0
    level: float = 0.99
    n_paths: int = 200_000
    spot: float = 100.0
    time: float = 0.0

    @property
    def horizon(self) -> float:
        return self.horizon_days / 252.0


@dataclass(frozen=True)
class Scenario:
    id: str
    params: MarketParams
    family: FamilyConfig = field(default_factory=FamilyConfig)
    sizes: tuple[int, int, int] = (8192, 1024, 512)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    risk: RiskConfig = field(default_factory=RiskConfig)
    probes: tuple[tuple[float, float], ...] = ((90.0, 0.75), (100.0, 0.5), (110.0, 0.25), (150.0, 0.75))
    compensated: bool = True
    ridge_scale: float = 1e-10
    grid_n: int = 2048
    provenance: str = "user"

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, train=replace(self.train, seed=seed))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "provenance": self.provenance,
            "params": self.params.to_dict(),
            "family": vars(self.family).copy(),
            "sizes": list(self.sizes),
            "weights": vars(self.weights).copy(),
            "train": self.train.to_dict(),
            "risk": vars(self.risk).copy(),
            "probes": [list(p) for p in self.probes],
            "compensated": self.compensated,
            "ridge_scale": self.ridge_scale,
            "grid_n": self.grid_n,
        }


def default_scenario_path() -> Path:
    return Path(str(resources.files("jumpwave") / "data" / "scenarios.ini"))


def published_probes_path() -> Path:
    """Shipped table of published probe prices (PINN, HW-PINN, benchmark)."""
    return default_scenario_path().parent / "published_probes.csv"


def _line_of(text: str, section: str | None, key: str | None) -> int | None:
    """1-based line where ``key`` is set within ``section`` (or where the section starts)."""
    lines = text.splitlines()
    start = 0
    if section is not None:
        hdr = re.compile(r"^\s*\[" + re.escape(section) + r"\]\s*$")
        found = [i for i, ln in enumerate(lines) if hdr.match(ln)]
        if not found:
            return None
        start = found[0]
        if key is None:
            return start + 1
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*[=:]", re.IGNORECASE)
    for i in range(start + (section is not None), len(lines)):
        if section is not None and i > start and lines[i].lstrip().startswith("["):
            break
        if pat.match(lines[i]):
            return i + 1
    return None


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, text: str, source: str):
        self.cp, self.text, self.source = cp, text, source

    def fail(self, section: str, key: str | None, msg: str):
        line = _line_of(self.text, section, key)
        if line is None and key is not None:
            line = _line_of(self.text, "DEFAULT", key)
        where = f"{self.source}:{line}" if line else self.source
        field_ = f" [{section}] {key}" if key else f" [{section}]"
        raise ScenarioError(f"{where}:{field_}: {msg}")

    def values(self, section: str, overrides: dict[str, str] | None = None) -> dict:
        raw = dict(self.cp[section])
        raw.update(overrides or {})
        out = {}
        for key, val in raw.items():
            if key not in KNOWN_KEYS:
                self.fail(section, key, "unknown key")
            try:
                if key in FLOAT_KEYS:
                    out[key] = float(val)
                elif key in INT_KEYS:
                    out[key] = int(val)
                elif key in BOOL_KEYS:
                    out[key] = configparser.ConfigParser.BOOLEAN_STATES[val.strip().lower()]
                else:
                    out[key] = val.strip()
            except (ValueError, KeyError):
                self.fail(section, key, f"cannot parse {val!r}")
        missing = sorted(REQUIRED_KEYS - out.keys())
        if missing:
            self.fail(section, None, f"missing keys: {', '.join(missing)}")
        return out


def _parse_probes(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        s, t = item.split(":")
        out.append((float(s), float(t)))
    if not out:
        raise ValueError("empty probe list")
    return tuple(out)


def _build(sid: str, v: dict) -> Scenario:
    params = MarketParams(**{k: v[k] for k in REQUIRED_KEYS})
    fam_keys = ("jx_min", "jx_max", "jt_min", "jt_max", "spacing", "margin", "max_atoms")
    family = FamilyConfig(**{k: v[k] for k in fam_keys if k in v})
    default = Scenario(sid, params)
    sizes = (v.get("n_collocation", default.sizes[0]), v.get("n_terminal", default.sizes[1]),
             v.get("n_boundary", default.sizes[2]))
    if min(sizes) < 1:
        raise ValueError("training set sizes must be positive")
    weights = LossWeights(v.get("w_pde", 1.0), v.get("w_ic", 5000.0), v.get("w_bc", 10.0))

    def pick(prefix, names):
        return {n: v[f"{prefix}_{k}"] for n, k in names if f"{prefix}_{k}" in v}

    s1 = AdamConfig(**pick("adam1", [("lr", "lr"), ("epochs", "epochs"), ("patience", "patience"),
                                     ("factor", "factor"), ("min_lr", "min_lr")]))
    s2 = AdamConfig(**{"lr": 1e-4, "epochs": 2000, "clip_norm": 1.0,
                       **pick("adam2", [("lr", "lr"), ("epochs", "epochs"), ("patience", "patience"),
                                        ("clip_norm", "clip")])})
    s3 = LBFGSConfig(**pick("lbfgs", [("max_iter", "max_iter"), ("history", "history"), ("c1", "c1"),
                                      ("c2", "c2"), ("tol", "tol"), ("max_ls", "max_ls")]))
    train = TrainConfig(s1, s2, s3, v.get("seed", 0))
    risk = RiskConfig(**pick("risk", [("horizon_days", "horizon_days"), ("level", "level"),
                                      ("n_paths", "paths"), ("spot", "spot"), ("time", "time")]))
    if not 0 < risk.level < 1 or risk.n_paths < 1:
        raise ValueError("risk level must lie in (0, 1) and risk_paths be positive")
    if not 0 < risk.horizon < params.maturity - risk.time:
        raise ValueError("risk horizon must fit before maturity")
    probes = _parse_probes(v["probes"]) if "probes" in v else default.probes
    return Scenario(sid, params, family, sizes, weights, train, risk, probes,
                    v.get("compensated", True), v.get("ridge_scale", 1e-10),
                    v.get("grid_n", 2048), v.get("provenance", "user"))


def load_scenarios(path=None, paper_scale: bool = False) -> dict[str, Scenario]:
    """Parse every scenario in ``path`` (default: the shipped file), in file order."""
    path = Path(path) if path is not None else default_scenario_path()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file ({exc.strerror})") from None
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}".replace("\n", " ")) from None
    reader = _Reader(cp, text, str(path))
    overrides = dict(cp[PAPER_SECTION]) if paper_scale and cp.has_section(PAPER_SECTION) else {}
    if paper_scale and not cp.has_section(PAPER_SECTION):
        raise ScenarioError(f"{path}: no [{PAPER_SECTION}] section")
    out: dict[str, Scenario] = {}
    for section in cp.sections():
        if section == PAPER_SECTION:
            continue
        if not section.startswith(PREFIX) or len(section) == len(PREFIX):
            reader.fail(section, None, f"sections must be named [{PREFIX}<id>]")
        sid = section[len(PREFIX):]
        values = reader.values(section, overrides)
        try:
            out[sid] = _build(sid, values)
        except (ValueError, TypeError) as exc:
            key = _guess_key(str(exc), values)
            reader.fail(section, key, str(exc))
    if not out:
        raise ScenarioError(f"{path}: no [{PREFIX}<id>] sections")
    return out


def _guess_key(msg: str, values: dict) -> str | None:
    """Best-effort field name for a validation message."""
    for key in sorted(values, key=len, reverse=True):
        if re.search(r"\b" + re.escape(key) + r"\b", msg):
            return key
    return None


def get_scenario(sid: str, path=None, paper_scale: bool = False) -> Scenario:
    scenarios = load_scenarios(path, paper_scale)
    if sid not in scenarios:
        raise ScenarioError(f"unknown scenario id {sid!r}; available: {', '.join(scenarios)}")
    return scenarios[sid]
