"""Finite-dimensional reduced energy over spike positions.

The energy of ``ell`` spikes at positions ``P_i`` with signs ``tau_i`` is,
to leading order in ``eps^(2 beta)``::

    J = c2 * sum_i (V(P_i) - 1) - 1/2 * sum_{i != j} tau_i tau_j K(|P_i - P_j| / eps)

For the quadratic model ``V - 1 = M[P]^2 / 2``.  The pair kernel ``K`` is
either ``c3 * w`` (``mode="asymptotic"``) or the tabulated convolution
``xi`` (``mode="xi_exact"``).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import ndimage, optimize

from .errors import (
    BadShape,
    EmptyFamily,
    LeftDomain,
    NoOppositePair,
    NotAdmissible,
    NotConverged,
    ValidationError,
)
from .potential import SaddlePotential, SpikeConfig, gamma_terms, in_D, in_gamma, quad
from .profile import Profile, ReducedConstants, eval_w, eval_w_prime, interaction_kernel

__all__ = [
    "MODES",
    "ReducedEval",
    "ConfigFamily",
    "CriticalOptions",
    "CriticalResult",
    "MaxMinReport",
    "reduced_energy",
    "reduced_gradient",
    "family_for",
    "generate",
    "h_map",
    "find_critical_point",
    "hessian",
    "hessian_signature",
    "maxmin_report",
    "r_eps",
]

MODES = ("asymptotic", "xi_exact")


def r_eps(eps: float) -> float:
    """Reference separation ``2 eps log(1/eps)``."""
    return 2.0 * eps * math.log(1.0 / eps)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

def _kernel(pr: Profile, rc: ReducedConstants, mode: str):
    if mode == "asymptotic":
        return (lambda d: rc.c3 * eval_w(pr, d)), (lambda d: rc.c3 * eval_w_prime(pr, d))
    if mode == "xi_exact":
        ker = interaction_kernel(pr)
        return ker, ker.derivative
    raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class ReducedEval:
    value: float
    gradient: np.ndarray
    mode: str
    potential_term: float
    interaction_term: float


def _evaluate(points, signs, eps, pr, pot, rc, mode):
    K, dK = _kernel(pr, rc, mode)
    ell = points.shape[0]
    pot_term = rc.c2 * float(np.sum(pot.V(points) - 1.0))
    grad = rc.c2 * pot.grad(points)
    inter = 0.0
    if ell > 1:
        i, j = np.triu_indices(ell, 1)
        diff = points[i] - points[j]
        d = np.linalg.norm(diff, axis=1)
        tt = signs[i] * signs[j]
        inter = -float(np.sum(tt * np.atleast_1d(K(d / eps))))
        coef = (-tt * np.atleast_1d(dK(d / eps)) / eps / d)[:, None] * diff
        np.add.at(grad, i, coef)
        np.add.at(grad, j, -coef)
    return pot_term, inter, grad


def reduced_energy(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential, rc: ReducedConstants,
                   mode: str = "xi_exact", check: bool = True) -> ReducedEval:
    """Reduced energy with its gradient and term breakdown.

    Emits a :class:`NotAdmissible` warning when the configuration is outside
    the admissible set; the value is still returned.
    """
    if check and not in_gamma(cfg, pr, pot):
        warnings.warn("configuration outside the admissible set", NotAdmissible, stacklevel=2)
    pot_term, inter, grad = _evaluate(cfg.points, cfg.signs, cfg.epsilon, pr, pot, rc, mode)
    return ReducedEval(value=pot_term + inter, gradient=grad.ravel(), mode=mode,
                       potential_term=pot_term, interaction_term=inter)


def reduced_gradient(cfg, pr, pot, rc, mode="xi_exact") -> np.ndarray:
    return _evaluate(cfg.points, cfg.signs, cfg.epsilon, pr, pot, rc, mode)[2].ravel()


# ---------------------------------------------------------------------------
# configuration families
# ---------------------------------------------------------------------------

KINDS = ("linear_chain", "polygon_star", "cross", "positive")


@dataclass(frozen=True)
class ConfigFamily:
    """One of the shaped families of (h positive, k negative) spikes.

    ``directions`` holds the fixed unit vectors: one for a chain, ``h`` for a
    star, two (v, w) for the cross, the B-offset direction for ``positive``.
    """

    kind: str
    h: int
    k: int
    pot: SaddlePotential
    directions: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        h, k, r = self.h, self.k, self.pot.r
        if self.kind not in KINDS:
            raise BadShape(f"unknown family kind {self.kind!r}")
        if self.kind == "positive":
            if k != 0 or h < 1:
                raise BadShape("positive family needs k = 0, h >= 1")
        else:
            if not (h >= 1 and k >= 1 and h + k <= 6):
                raise BadShape(f"(h, k) = ({h}, {k}) outside h, k >= 1, h + k <= 6")
        if self.kind == "linear_chain" and k not in (h - 1, h):
            raise BadShape("chains need k = h or k = h - 1")
        if self.kind == "polygon_star" and not (k == 1 and 2 <= h <= 5 and r >= 2):
            raise BadShape("stars need k = 1, 2 <= h <= 5 and signature r >= 2")
        if self.kind == "cross" and not ((h, k) == (4, 2) and r >= 2):
            raise BadShape("the cross needs (h, k) = (4, 2) and signature r >= 2")
        N = self.pot.N
        e = np.eye(N)
        if self.directions is None:
            if self.kind == "linear_chain":
                dirs = e[:1]
            elif self.kind == "polygon_star":
                ang = 2 * np.pi * np.arange(h) / h
                dirs = np.cos(ang)[:, None] * e[0] + np.sin(ang)[:, None] * e[1]
            elif self.kind == "cross":
                dirs = e[:2]
            else:
                dirs = e[r:r + 1]
            object.__setattr__(self, "directions", dirs)
        else:
            object.__setattr__(self, "directions", np.atleast_2d(np.asarray(self.directions, float)))

    @property
    def ell(self) -> int:
        return self.h + self.k

    @property
    def signs(self) -> np.ndarray:
        ell = self.ell
        if self.kind == "linear_chain":
            return np.array([(-1.0) ** i for i in range(ell)])
        if self.kind == "polygon_star":
            return np.array([-1.0] + [1.0] * (ell - 1))
        if self.kind == "cross":
            return np.array([-1.0, 1.0, -1.0, 1.0, 1.0, 1.0])
        return np.ones(ell)

    @property
    def param_dim(self) -> int:
        if self.kind == "positive":
            return self.ell * self.pot.r
        return self.pot.r + self.ell - 1

    def b_offsets(self, eps: float) -> np.ndarray:
        """Fixed B-offsets of the positive family, spaced ``2 eps log(1/eps)``."""
        step = r_eps(eps)
        idx = np.arange(self.ell) - 0.5 * (self.ell - 1)
        return idx[:, None] * step * self.directions[0]


def family_for(h: int, k: int, pot: SaddlePotential, kind: str | None = None) -> ConfigFamily:
    """Pick the family that covers ``(h, k)``; chains win where two apply."""
    if kind is None:
        if k == 0:
            kind = "positive"
        elif k in (h - 1, h):
            kind = "linear_chain"
        elif k == 1:
            kind = "polygon_star"
        elif (h, k) == (4, 2):
            kind = "cross"
        else:
            raise BadShape(f"no family for (h, k) = ({h}, {k})")
    return ConfigFamily(kind, h, k, pot)


def _embed_A(pot, a):
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (pot.N,))
    if a.shape[-1] == pot.N:
        return a.copy()
    if a.shape[-1] != pot.r:
        raise ValidationError(f"A-vectors need {pot.r} components")
    out[..., : pot.r] = a
    return out


def generate(family: ConfigFamily, a, r, eps: float, beta: float = 0.9) -> SpikeConfig:
    """Point pattern of the family at parameters ``(a, r)``.

    For the positive family ``a`` is an ``(ell, r)`` array of A-components and
    ``r`` is ignored.
    """
    pot = family.pot
    if family.kind == "positive":
        a = np.atleast_2d(a)
        if a.shape[0] != family.ell:
            raise ValidationError("positive family needs one A-vector per spike")
        pts = _embed_A(pot, a) + family.b_offsets(eps)
        return SpikeConfig(eps, pts, family.signs, beta)
    a = _embed_A(pot, a)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.shape != (family.ell - 1,) or np.any(r <= 0):
        raise ValidationError(f"need {family.ell - 1} positive separations")
    if family.kind == "linear_chain":
        offs = np.concatenate([[0.0], np.cumsum(r)])[:, None] * family.directions[0]
    elif family.kind == "polygon_star":
        offs = np.vstack([np.zeros(pot.N), r[:, None] * family.directions])
    else:
        v, w = family.directions
        c = np.cumsum(r[:3])
        offs = np.vstack([np.zeros(pot.N), c[0] * v, c[1] * v, c[2] * v, r[3] * w, -r[4] * w])
    return SpikeConfig(eps, a + offs, family.signs, beta)


def h_map(cfg: SpikeConfig, pot: SaddlePotential):
    """``(pi_A(P_1), r)`` with ``r_i`` the nearest earlier opposite-sign distance.

    For an all-positive configuration the A-projections of every point are
    returned instead (and ``r`` is empty).  Ties within 1e-12 go to the
    smaller index.
    """
    pts, tau = cfg.points, cfg.signs
    if cfg.ell < 2:
        raise ValidationError("h_map needs at least two spikes")
    if np.all(tau == tau[0]):
        return pts[:, : pot.r].copy(), np.zeros(0)
    a = pts[0, : pot.r].copy()
    r = np.empty(cfg.ell - 1)
    for i in range(1, cfg.ell):
        best = math.inf
        for j in range(i):
            if tau[j] != -tau[i]:
                continue
            d = float(np.linalg.norm(pts[i] - pts[j]))
            if d < best - 1e-12:
                best = d
        if best == math.inf:
            raise NoOppositePair(f"point {i + 1} has no earlier opposite-sign point")
        r[i - 1] = best
    return a, r


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

@dataclass
class CriticalOptions:
    mode: str = "xi_exact"
    gtol: float = 1e-9
    max_iter: int = 200
    fd_rel_step: float = 1e-5
    null_rel: float = 1e-3
    check_domain: bool = True


@dataclass
class CriticalResult:
    config: SpikeConfig
    value: float
    grad_norm: float
    iterations: int
    hessian_eigs: np.ndarray
    signature: dict
    in_gamma: bool
    in_D: bool


def hessian(cfg, pr, pot, rc, mode="xi_exact", rel_step=1e-5) -> np.ndarray:
    """Central-difference Hessian of the reduced energy (symmetrised)."""
    x0 = cfg.points.ravel()
    n = x0.size
    step = rel_step * cfg.epsilon
    H = np.empty((n, n))
    for k in range(n):
        dx = np.zeros(n)
        dx[k] = step
        gp = _evaluate((x0 + dx).reshape(cfg.points.shape), cfg.signs, cfg.epsilon, pr, pot, rc, mode)[2]
        gm = _evaluate((x0 - dx).reshape(cfg.points.shape), cfg.signs, cfg.epsilon, pr, pot, rc, mode)[2]
        H[:, k] = (gp - gm).ravel() / (2 * step)
    return 0.5 * (H + H.T)


def hessian_signature(H: np.ndarray, null_rel: float = 1e-3):
    eigs = np.linalg.eigvalsh(H)
    scale = np.max(np.abs(eigs)) if eigs.size else 0.0
    null = np.abs(eigs) < null_rel * scale
    sig = {"positive": int(np.sum((eigs > 0) & ~null)),
           "negative": int(np.sum((eigs < 0) & ~null)),
           "null": int(np.sum(null))}
    return eigs, sig


def find_critical_point(seed: SpikeConfig, pr: Profile, pot: SaddlePotential,
                        rc: ReducedConstants, opts: CriticalOptions | None = None) -> CriticalResult:
    """Drive ``|grad J|^2`` to zero with a trust-region Gauss-Newton on the gradient.

    The Jacobian of the gradient is the finite-difference Hessian.  Raises
    :class:`NotConverged` if the gradient target is missed and
    :class:`LeftDomain` if the result is not admissible.
    """
    opts = opts or CriticalOptions()
    shape = seed.points.shape
    eps, tau = seed.epsilon, seed.signs

    def grad(x):
        return _evaluate(x.reshape(shape), tau, eps, pr, pot, rc, opts.mode)[2].ravel()

    def jac(x):
        return hessian(seed.with_points(x.reshape(shape)), pr, pot, rc, opts.mode, opts.fd_rel_step)

    x0 = seed.points.ravel().copy()
    g0 = grad(x0)
    nit = 0
    if np.linalg.norm(g0) > opts.gtol:
        sol = optimize.least_squares(grad, x0, jac=jac, method="trf", x_scale=eps,
                                     ftol=1e-15, xtol=1e-15, gtol=1e-15,
                                     max_nfev=opts.max_iter)
        x0, nit = sol.x, sol.nfev
    cfg = seed.with_points(x0.reshape(shape))
    g = grad(x0)
    gn = float(np.linalg.norm(g))
    if gn > opts.gtol:
        raise NotConverged(f"gradient norm {gn:.3e} above {opts.gtol:.1e} after {nit} evaluations")
    ok_gamma = in_gamma(cfg, pr, pot)
    if opts.check_domain and not ok_gamma:
        raise LeftDomain("critical configuration lies outside the admissible set")
    eigs, sig = hessian_signature(hessian(cfg, pr, pot, rc, opts.mode, opts.fd_rel_step), opts.null_rel)
    val = reduced_energy(cfg, pr, pot, rc, opts.mode, check=False).value
    return CriticalResult(config=cfg, value=val, grad_norm=gn, iterations=nit, hessian_eigs=eigs,
                          signature=sig, in_gamma=ok_gamma, in_D=in_D(cfg, pr, rc, pot))


# ---------------------------------------------------------------------------
# max-min geometry
# ---------------------------------------------------------------------------

@dataclass
class MaxMinReport:
    eps: float
    beta: float
    level: float  # c4 eps^(2 beta) / 4
    n_K: int
    J_min_K: float
    J_max_K: float
    n_K0: int
    K0_min: float
    K0_max: float
    K0_mean: float
    K0_max_rel_dev: float
    contains_r_eps: bool
    samples: np.ndarray = field(repr=False)  # rows (params..., J, |grad J|)
    boundary: np.ndarray = field(repr=False)  # rows (params..., J)

    def as_dict(self) -> dict:
        keys = ("eps", "beta", "level", "n_K", "J_min_K", "J_max_K", "n_K0", "K0_min",
                "K0_max", "K0_mean", "K0_max_rel_dev", "contains_r_eps")
        return {k: getattr(self, k) for k in keys}


def _S_value(family, params, eps, beta, pr, rc):
    cfg = _params_to_cfg(family, params, eps, beta)
    mbar, inter = gamma_terms(cfg, pr, family.pot)
    return rc.c2 * float(np.sum(mbar)) + 2.0 * rc.c3 * float(np.sum(inter))


def _params_to_cfg(family, params, eps, beta):
    r_sig = family.pot.r
    if family.kind == "positive":
        return generate(family, np.reshape(params, (family.ell, r_sig)), None, eps, beta)
    return generate(family, params[:r_sig], params[r_sig:], eps, beta)


def maxmin_report(family: ConfigFamily, pr: Profile, rc: ReducedConstants, eps: float,
                  beta: float = 0.9, n_grid: int = 41, mode: str = "xi_exact",
                  n_boundary: int = 400, seed: int = 0) -> MaxMinReport:
    """Sample K and its boundary K0 and compare J on K0 with ``c4 eps^(2 beta) / 4``.

    For the mixed families the parameter set is the component of
    ``{S(P(a, r)) < c4 eps^(2 beta)/2}`` containing ``(0, r_eps)``, sampled on
    a box grid; when ``(0, r_eps)`` is not in the set the component holding
    the smallest ``S`` is used and ``contains_r_eps`` is False.  Boundary
    points are located by bisection along grid edges leaving the component.
    """
    pot = family.pot
    lev_S = 0.5 * rc.c4 * eps ** (2 * beta)
    level = 0.25 * rc.c4 * eps ** (2 * beta)

    def J_of(params):
        cfg = _params_to_cfg(family, params, eps, beta)
        ev = reduced_energy(cfg, pr, pot, rc, mode, check=False)
        return ev.value, float(np.linalg.norm(ev.gradient))

    lam_min = float(np.min(pot.lam[: pot.r]))
    a_max = math.sqrt(lev_S / (rc.c2 * lam_min))

    if family.kind == "positive":
        return _maxmin_positive(family, pr, rc, eps, beta, mode, n_boundary, seed, lev_S, level,
                                a_max, J_of)

    r_sig, ell = pot.r, family.ell
    axes = [np.linspace(-a_max, a_max, n_grid)] * r_sig + \
        [np.linspace(2.0 * a_max / n_grid, 2.0 * a_max, n_grid)] * (ell - 1)
    grid_pts = np.array(list(product(*axes)))
    S = np.array([_S_value(family, x, eps, beta, pr, rc) for x in grid_pts])
    shape = (n_grid,) * len(axes)
    mask = (S < lev_S).reshape(shape)
    if not mask.any():
        raise EmptyFamily(f"no sampled configuration satisfies the K constraint at eps={eps}")
    labels, _ = ndimage.label(mask)
    ref = np.concatenate([np.zeros(r_sig), np.full(ell - 1, r_eps(eps))])
    contains = _S_value(family, ref, eps, beta, pr, rc) < lev_S
    if contains:
        idx = tuple(int(np.argmin(np.abs(ax - v))) for ax, v in zip(axes, ref))
        lab = labels[idx]
        if lab == 0:  # grid too coarse to see the reference point
            lab = labels.ravel()[np.argmin(np.where(mask.ravel(), np.sum((grid_pts - ref) ** 2, 1), np.inf))]
    else:
        lab = labels.ravel()[int(np.argmin(np.where(mask.ravel(), S, np.inf)))]
    comp = labels == lab

    inside = np.nonzero(comp.ravel())[0]
    samples = np.array([[*grid_pts[k], *J_of(grid_pts[k])] for k in inside])

    bpts = []
    flat_shape = comp.shape
    for k in inside:
        idx = np.unravel_index(k, flat_shape)
        for ax in range(len(axes)):
            for step in (-1, 1):
                nb = list(idx)
                nb[ax] += step
                if not 0 <= nb[ax] < n_grid or comp[tuple(nb)]:
                    continue
                x_in = grid_pts[k]
                x_out = grid_pts[np.ravel_multi_index(tuple(nb), flat_shape)]
                if _S_value(family, x_out, eps, beta, pr, rc) < lev_S:
                    continue  # neighbour inside the set but in another component
                bpts.append(_bisect_level(family, x_in, x_out, eps, beta, pr, rc, lev_S))
    if not bpts:
        raise EmptyFamily("sampled component has no boundary inside the box")
    bvals = np.array([J_of(x)[0] for x in bpts])
    boundary = np.column_stack([np.array(bpts), bvals])
    dev = np.abs(bvals / level - 1.0)
    return MaxMinReport(eps=eps, beta=beta, level=level, n_K=len(inside),
                        J_min_K=float(samples[:, -2].min()), J_max_K=float(samples[:, -2].max()),
                        n_K0=len(bvals), K0_min=float(bvals.min()), K0_max=float(bvals.max()),
                        K0_mean=float(bvals.mean()), K0_max_rel_dev=float(dev.max()),
                        contains_r_eps=bool(contains), samples=samples, boundary=boundary)


def _bisect_level(family, x_in, x_out, eps, beta, pr, rc, lev):
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _S_value(family, x_in + mid * (x_out - x_in), eps, beta, pr, rc) < lev:
            lo = mid
        else:
            hi = mid
    return x_in + lo * (x_out - x_in)


def _maxmin_positive(family, pr, rc, eps, beta, mode, n_boundary, seed, lev_S, level, a_max, J_of):
    pot = family.pot
    r_sig, ell = pot.r, family.ell
    lamp = pot.lam[: pot.r]
    rng = np.random.default_rng(seed)
    # U is the ellipsoid c2 sum M+[a_i]^2 < lev_S; sample the interior radially
    dirs = rng.standard_normal((n_boundary, ell * r_sig))
    scale = np.sqrt(rc.c2 * np.sum(np.tile(lamp, ell) * dirs ** 2, axis=1) / lev_S)
    bnd = dirs / scale[:, None]
    radii = rng.random(n_boundary) ** (1.0 / (ell * r_sig))
    interior = bnd * radii[:, None]
    samples = np.array([[*x, *J_of(x)] for x in interior])
    bvals = np.array([J_of(x)[0] for x in bnd])
    dev = np.abs(bvals / level - 1.0)
    return MaxMinReport(eps=eps, beta=beta, level=level, n_K=n_boundary,
                        J_min_K=float(samples[:, -2].min()), J_max_K=float(samples[:, -2].max()),
                        n_K0=n_boundary, K0_min=float(bvals.min()), K0_max=float(bvals.max()),
                        K0_mean=float(bvals.mean()), K0_max_rel_dev=float(dev.max()),
                        contains_r_eps=True, samples=samples, boundary=np.column_stack([bnd, bvals]))
