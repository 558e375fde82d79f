"""Run configuration: a sectioned key-value file with bracketed arrays.

Example::

    [profile]
    N = 2
    p = 3.0
    tol = 1e-9

    [ladder]
    epsilons = [0.1, 0.07, 0.05, 0.035]
    beta = 0.5

Every key has a default, so a file only lists what it changes.  Values are
Python literals (numbers, strings, bracketed lists).
"""
from __future__ import annotations

import ast
import configparser
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .potential import make_saddle
from .reduced import MODES, family_for

__all__ = ["RunConfig", "load_config", "parse_config", "SCHEMA"]

# (section, key) -> attribute
SCHEMA = {
    ("profile", "N"): "N",
    ("profile", "p"): "p",
    ("profile", "tol"): "profile_tol",
    ("potential", "lambdas"): "lambdas",
    ("potential", "cubic"): "cubic",
    ("ladder", "epsilons"): "epsilons",
    ("ladder", "beta"): "beta",
    ("family", "kind"): "family_kind",
    ("family", "h"): "h",
    ("family", "k"): "k",
    ("family", "theta"): "theta",
    ("family", "kappa"): "kappa",
    ("grid", "ratio"): "grid_ratio",
    ("grid", "v_floor"): "v_floor",
    ("grid", "clearance"): "clearance",
    ("grid", "n_max"): "n_max",
    ("solver", "mode"): "mode",
    ("solver", "gtol"): "gtol",
    ("solver", "newton_tol"): "newton_tol",
    ("solver", "projected_tol"): "projected_tol",
    ("reduce", "points"): "reduce_points",
    ("maxmin", "beta"): "maxmin_beta",
    ("maxmin", "n_grid"): "maxmin_grid",
    ("lemma", "ells"): "lemma_ells",
    ("lemma", "dim"): "lemma_dim",
    ("lemma", "trials"): "lemma_trials",
    ("run", "seed"): "seed",
    ("run", "out"): "out",
    ("run", "cache_dir"): "cache_dir",
}


@dataclass
class RunConfig:
    N: int = 2
    p: float = 3.0
    profile_tol: float = 1e-9
    lambdas: list = field(default_factory=lambda: [1.0, -1.0])
    cubic: float = 0.0
    epsilons: list = field(default_factory=lambda: [0.1, 0.07, 0.05, 0.035])
    beta: float = 0.5
    family_kind: str = "linear_chain"
    h: int = 1
    k: int = 1
    theta: float = 0.5
    kappa: float = 0.0
    grid_ratio: float = 8.0
    v_floor: float = 0.25
    clearance: float = 2.0
    n_max: int = 1025
    mode: str = "xi_exact"
    gtol: float = 1e-9
    newton_tol: float = 1e-9
    projected_tol: float = 1e-9
    reduce_points: int = 4096
    maxmin_beta: float = 0.1
    maxmin_grid: int = 41
    lemma_ells: list = field(default_factory=lambda: [2, 3, 4, 5, 6, 7])
    lemma_dim: int = 2
    lemma_trials: int = 10_000
    seed: int = 0
    out: str = "runs/default"
    cache_dir: str = ""

    def validate(self) -> "RunConfig":
        """Re-check every downstream precondition; returns ``self``."""
        if self.N not in (1, 2, 3):
            raise ValidationError("N must be 1, 2 or 3")
        if not self.p > 2:
            raise ValidationError("p must exceed 2")
        if self.N == 3 and not self.p < 6:
            raise ValidationError("N = 3 needs p < 6")
        if not 0 < self.profile_tol < 1e-3:
            raise ValidationError("profile tol must lie in (0, 1e-3)")
        if self.lambdas:
            if len(self.lambdas) != self.N:
                raise ValidationError(f"{len(self.lambdas)} eigenvalues for N = {self.N}")
            make_saddle(self.lambdas, self.cubic)
        eps = [float(e) for e in self.epsilons]
        if not eps or any(not 0 < e < 1 for e in eps):
            raise ValidationError("epsilons must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("the epsilon ladder must be strictly decreasing")
        for b in (self.beta, self.maxmin_beta):
            if not 0 < b < 1:
                raise ValidationError("beta must lie in (0, 1)")
        if self.lambdas and self.N >= 2:
            family_for(self.h, self.k, self.potential(), self.family_kind or None)
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.grid_ratio < 8:
            raise ValidationError("grid ratio eps/h must be at least 8")
        if not 0 < self.v_floor < 1:
            raise ValidationError("v_floor must lie in (0, 1)")
        if not self.theta > 0:
            raise ValidationError("theta must be positive")
        if self.lemma_dim not in (2, 3) or any(not 2 <= ell <= 7 for ell in self.lemma_ells):
            raise ValidationError("lemma check needs dim in {2, 3} and 2 <= ell <= 7")
        if self.seed < 0 or self.lemma_trials < 0 or self.reduce_points < 1:
            raise ValidationError("seed and counts must be non-negative")
        return self

    def potential(self):
        return make_saddle(self.lambdas, self.cubic)

    def family(self):
        return family_for(self.h, self.k, self.potential(), self.family_kind or None)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        """Serialise back to the key-value format."""
        attrs = {f.name: getattr(self, f.name) for f in fields(self)}
        lines, section = [], None
        for (sec, key), attr in SCHEMA.items():
            if sec != section:
                lines.append(("\n" if lines else "") + f"[{sec}]")
                section = sec
            lines.append(f"{key} = {attrs[attr]!r}")
        return "\n".join(lines) + "\n"


def _coerce(attr, raw, default):
    try:
        val = ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        val = raw.strip()
    if isinstance(default, bool):
        return bool(val)
    if isinstance(default, int) and not isinstance(val, str):
        if float(val) != int(val):
            raise ValidationError(f"{attr} must be an integer")
        return int(val)
    if isinstance(default, float) and not isinstance(val, str):
        return float(val)
    if isinstance(default, list):
        if not isinstance(val, (list, tuple)):
            raise ValidationError(f"{attr} must be a bracketed list")
        return list(val)
    if isinstance(default, str):
        return str(val)
    raise ValidationError(f"cannot read {attr} from {raw!r}")


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    cfg = RunConfig()
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            attr = SCHEMA.get((sec, key))
            if attr is None:
                raise ValidationError(f"unknown config key [{sec}] {key}")
            setattr(cfg, attr, _coerce(attr, raw, getattr(RunConfig(), attr)))
    return cfg.validate()


def load_config(path) -> RunConfig:
    """Read a config file, or the config echo of a run manifest (``.json``)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file {path} not found")
    if path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        data = data.get("config", data)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return RunConfig(**data).validate()
    return parse_config(path.read_text(encoding="utf-8"))
