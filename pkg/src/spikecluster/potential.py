"""Saddle potential near its critical point and the admissible spike sets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotASaddle, ValidationError
from .profile import Profile, ReducedConstants, eval_w

__all__ = [
    "SaddlePotential",
    "SpikeConfig",
    "make_saddle",
    "quad",
    "in_gamma",
    "in_D",
    "gamma_terms",
    "D_functional",
    "FORMS",
]

FORMS = ("M", "M+", "M-", "Mbar")


@dataclass(frozen=True)
class SaddlePotential:
    """``V(x) = 1 + 1/2 sum_n lambda_n x_n^2 + cubic * x_1^3``.

    Positive eigenvalues come first; ``r`` counts them.  The cubic term is a
    synthetic higher-order perturbation that leaves ``V(0)``, ``grad V(0)``
    and the Hessian at 0 unchanged.
    """

    lambdas: tuple
    cubic: float = 0.0

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if len(lam) < 2:
            raise NotASaddle("a saddle needs N >= 2")
        if any(x == 0.0 for x in lam):
            raise NotASaddle("zero Hessian eigenvalue")
        pos = [x > 0 for x in lam]
        if all(pos) or not any(pos):
            raise NotASaddle("eigenvalues must take both signs")
        r = sum(pos)
        if pos != [True] * r + [False] * (len(lam) - r):
            raise ValidationError("list positive eigenvalues first")

    @property
    def N(self) -> int:
        return len(self.lambdas)

    @property
    def r(self) -> int:
        return sum(x > 0 for x in self.lambdas)

    @property
    def lam(self) -> np.ndarray:
        return np.array(self.lambdas)

    def V(self, x):
        """Potential at points ``x`` of shape (..., N)."""
        x = np.asarray(x, dtype=float)
        return 1.0 + 0.5 * np.sum(self.lam * x * x, axis=-1) + self.cubic * x[..., 0] ** 3

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        g = self.lam * x
        if self.cubic:
            g = g.copy()
            g[..., 0] += 3.0 * self.cubic * x[..., 0] ** 2
        return g

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        H = np.diag(self.lam).astype(float)
        if self.cubic:
            H[0, 0] += 6.0 * self.cubic * x[0]
        return H

    def box_infimum(self, L: float) -> float:
        """Minimum of V over the cube ``[-L, L]^N``."""
        v = 1.0 + 0.5 * L * L * float(np.sum(np.minimum(self.lam, 0.0)))
        if self.cubic:
            v -= abs(self.cubic) * L ** 3
        return v

    def check_box(self, L: float, floor: float = 0.0) -> None:
        if not self.box_infimum(L) > floor:
            raise ValidationError(
                f"inf V over the box of half-width {L:g} is {self.box_infimum(L):.3g} <= {floor:g}")

    def max_half_width(self, floor: float) -> float:
        """Largest box half-width keeping ``inf V`` above ``floor``."""
        neg = -float(np.sum(np.minimum(self.lam, 0.0)))
        L = np.sqrt(2.0 * (1.0 - floor) / neg)
        if self.cubic:
            lo, hi = 0.0, L
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if self.box_infimum(mid) > floor else (lo, mid)
            L = lo
        return float(L)

    def form(self, name: str) -> np.ndarray:
        """Diagonal of M, M+, M- or Mbar."""
        lam = self.lam
        if name == "M":
            return lam
        if name == "M+":
            return np.maximum(lam, 0.0)
        if name == "M-":
            return np.maximum(-lam, 0.0)
        if name == "Mbar":
            return np.abs(lam)
        raise ValidationError(f"unknown form {name!r}; expected one of {FORMS}")

    def project_A(self, x):
        x = np.array(x, dtype=float)
        x[..., self.r:] = 0.0
        return x

    def project_B(self, x):
        x = np.array(x, dtype=float)
        x[..., : self.r] = 0.0
        return x


def make_saddle(lambdas, cubic: float = 0.0) -> SaddlePotential:
    return SaddlePotential(tuple(lambdas), cubic)


def quad(pot: SaddlePotential, form: str, P, Q=None) -> float:
    """``form[P]^2`` or, with ``Q``, the bilinear value ``form[P, Q]``."""
    d = pot.form(form)
    P = np.asarray(P, dtype=float)
    Q = P if Q is None else np.asarray(Q, dtype=float)
    if P.shape[-1] != d.size or Q.shape[-1] != d.size:
        raise DimensionMismatch(f"expected vectors of length {d.size}")
    return np.sum(d * P * Q, axis=-1)


@dataclass(frozen=True, eq=False)
class SpikeConfig:
    """Spike centres, signs and the scale parameters ``epsilon``, ``beta``.

    Coincident points are allowed on construction so the admissibility
    predicates can reject them.
    """

    epsilon: float
    points: np.ndarray
    signs: np.ndarray = field(default=None)
    beta: float = 0.9

    def __post_init__(self):
        pts = np.atleast_2d(np.array(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValidationError("points must be an (ell, N) array with ell >= 1")
        sg = np.ones(pts.shape[0]) if self.signs is None else np.array(self.signs, dtype=float)
        if sg.shape != (pts.shape[0],) or not np.all(np.abs(sg) == 1):
            raise ValidationError("signs must be +-1, one per point")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not 0 < self.beta < 1:
            raise ValidationError("beta must lie in (0, 1)")
        pts.setflags(write=False)
        sg.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "signs", sg)

    @property
    def ell(self) -> int:
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    @property
    def level(self) -> float:
        """``epsilon^(2 beta)``, the scale of the reduced energy."""
        return self.epsilon ** (2 * self.beta)

    def with_points(self, points) -> "SpikeConfig":
        return SpikeConfig(self.epsilon, points, self.signs, self.beta)

    def pair_distances(self) -> np.ndarray:
        """Distances ``|P_i - P_j|`` for i < j, in ``np.triu_indices`` order."""
        i, j = np.triu_indices(self.ell, 1)
        return np.linalg.norm(self.points[i] - self.points[j], axis=1)


def gamma_terms(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential):
    """``Mbar[P_i]^2`` per point and ``w(|P_i - P_j|/eps)`` per pair."""
    if cfg.N != pot.N:
        raise DimensionMismatch("configuration and potential dimensions differ")
    mbar = quad(pot, "Mbar", cfg.points)
    inter = eval_w(pr, cfg.pair_distances() / cfg.epsilon)
    return np.atleast_1d(mbar), np.atleast_1d(inter)


def in_gamma(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential) -> bool:
    """All ``Mbar[P_i]^2`` and pairwise ``w((P_i - P_j)/eps)`` below ``eps^(2 beta)``."""
    mbar, inter = gamma_terms(cfg, pr, pot)
    lev = cfg.level
    return bool(np.all(mbar < lev) and np.all(inter < lev))


def D_functional(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential, rc: ReducedConstants,
                 same_sign_only: bool = False) -> float:
    """``c2 sum Mbar[P_i]^2 + c3 sum_{i != j} w((P_i - P_j)/eps)``."""
    mbar, inter = gamma_terms(cfg, pr, pot)
    if same_sign_only:
        i, j = np.triu_indices(cfg.ell, 1)
        inter = inter[cfg.signs[i] == cfg.signs[j]]
    return float(rc.c2 * np.sum(mbar) + 2.0 * rc.c3 * np.sum(inter))


def in_D(cfg: SpikeConfig, pr: Profile, rc: ReducedConstants, pot: SaddlePotential) -> bool:
    return D_functional(cfg, pr, pot, rc) < rc.c4 * cfg.level
