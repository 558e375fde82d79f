"""Radial ground state of ``Δw - w + f(w) = 0`` and the constants built on it.

The profile is found in two passes.  A classical overshoot/undershoot
bisection on ``w(0)`` brackets the ground state; because that shooting
problem is exponentially unstable the bisected value is then polished by a
two-sided match: a forward integration from the origin meets a backward
integration started on the exact decaying solution of the linearised tail.
The backward leg is stable, so the table is accurate all the way down to
``w ~ 1e-8`` where the closed-form tail takes over.

Tail convention
---------------
Beyond the switch radius the profile is ``A * t(r)`` with::

    t(r) = sqrt(2/pi) * r**(-nu) * K_nu(r),      nu = (N - 2) / 2

which is the decaying solution of ``u'' + (N-1)/r u' - u = 0``.  It equals
``r**(-(N-1)/2) * exp(-r)`` exactly for N = 1, 3 and up to ``1 + O(1/r)``
for N = 2, so ``A`` is the usual decay amplitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, linalg, special
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    DivergentIntegral,
    NoGroundState,
    NondegeneracyFailed,
    NoPlateau,
    ToleranceNotReached,
    ValidationError,
)

__all__ = [
    "Nonlinearity",
    "Profile",
    "ReducedConstants",
    "NondegeneracyReport",
    "InteractionKernel",
    "solve_profile",
    "eval_w",
    "eval_w_prime",
    "decay_amplitude",
    "compute_constants",
    "interaction_xi",
    "interaction_xi_prime",
    "interaction_kernel",
    "verify_nondegeneracy",
    "domination_constant",
    "kernel_h1_norm",
    "c3_from_interaction",
    "save_profile",
    "load_profile",
    "cache_path",
    "get_profile",
]

CACHE_VERSION = 1
_START_RADIUS = 1e-4  # series start, avoids the r = 0 singularity
_SWITCH_LEVEL = 1e-8  # r_star is the first node with w below this


@dataclass(frozen=True)
class Nonlinearity:
    """Odd power nonlinearity ``f(t) = |t|^(p-2) t``."""

    p: float = 3.0

    def __post_init__(self):
        if not self.p > 2:
            raise ValidationError(f"exponent p must exceed 2, got {self.p}")

    @property
    def sigma(self) -> float:
        return min(1.0, self.p - 2.0)

    def f(self, t):
        t = np.asarray(t, dtype=float)
        return np.abs(t) ** (self.p - 2.0) * t

    def F(self, t):
        t = np.asarray(t, dtype=float)
        return np.abs(t) ** self.p / self.p

    def fprime(self, t):
        t = np.asarray(t, dtype=float)
        return (self.p - 1.0) * np.abs(t) ** (self.p - 2.0)


def _tail_shape(N: int, r):
    """Decaying solution ``t(r)`` of the linearised radial equation."""
    r = np.asarray(r, dtype=float)
    nu = 0.5 * (N - 2)
    return math.sqrt(2.0 / math.pi) * r ** (-nu) * special.kve(nu, r) * np.exp(-r)


def _tail_shape_prime(N: int, r):
    r = np.asarray(r, dtype=float)
    nu = 0.5 * (N - 2)
    return -math.sqrt(2.0 / math.pi) * r ** (-nu) * special.kve(nu + 1.0, r) * np.exp(-r)


@dataclass(frozen=True, eq=False)
class Profile:
    """Tabulated ground state with a closed-form tail.

    Attributes
    ----------
    dim : int
        Space dimension N.
    nonlinearity : Nonlinearity
    w0 : float
        Centre value ``w(0)``.
    r, w, wp : ndarray
        Node radii (uniform, starting at 0) with values and derivatives.
    A : float
        Tail amplitude.
    r_star : float
        Last tabulated radius; the tail formula is used beyond it.
    tol : float
        Tolerance the profile was solved to.
    """

    dim: int
    nonlinearity: Nonlinearity
    w0: float
    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    A: float
    r_star: float
    tol: float
    _spl_w: CubicHermiteSpline = field(init=False, repr=False)
    _spl_wp: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("r", "w", "wp"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        wpp = _second_derivative(self.dim, self.nonlinearity, self.r, self.w, self.wp)
        object.__setattr__(self, "_spl_w", CubicHermiteSpline(self.r, self.w, self.wp))
        object.__setattr__(self, "_spl_wp", CubicHermiteSpline(self.r, self.wp, wpp))

    @property
    def p(self) -> float:
        return self.nonlinearity.p

    def __call__(self, r):
        return eval_w(self, r)


def _second_derivative(N, nl, r, w, wp):
    """``w''`` from the ODE itself; the r = 0 limit is ``(w0 - f(w0)) / N``."""
    wpp = np.empty_like(w)
    wpp[0] = (w[0] - nl.f(w[0])) / N
    wpp[1:] = -(N - 1) / r[1:] * wp[1:] + w[1:] - nl.f(w[1:])
    return wpp


def eval_w(pr: Profile, r):
    """Profile value at radius ``r`` (array friendly)."""
    r = np.asarray(r, dtype=float)
    inside = r <= pr.r_star
    out = np.empty_like(r)
    out[inside] = pr._spl_w(r[inside])
    rt = r[~inside]
    out[~inside] = pr.A * _tail_shape(pr.dim, rt)
    return out if out.ndim else float(out)


def eval_w_prime(pr: Profile, r):
    """Radial derivative ``w'(r)``; negative for r > 0."""
    r = np.asarray(r, dtype=float)
    inside = r <= pr.r_star
    out = np.empty_like(r)
    out[inside] = pr._spl_wp(r[inside])
    rt = r[~inside]
    out[~inside] = pr.A * _tail_shape_prime(pr.dim, rt)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def _rhs(N, nl):
    def rhs(r, y):
        return (y[1], -(N - 1) / r * y[1] + y[0] - nl.f(y[0]))

    return rhs


def _series_start(N, nl, w0, r0=_START_RADIUS):
    c = (w0 - float(nl.f(w0))) / N
    return np.array([w0 + 0.5 * c * r0 * r0, c * r0])


def _classify(N, nl, w0, r_max=60.0):
    """+1 if the trajectory crosses zero (w0 too large), -1 if it turns up."""
    if w0 - float(nl.f(w0)) >= 0.0:
        return -1

    def crosses(r, y):
        return y[0]

    crosses.terminal = True
    crosses.direction = -1

    def turns(r, y):
        return y[1]

    turns.terminal = True
    turns.direction = 1

    sol = integrate.solve_ivp(
        _rhs(N, nl), (_START_RADIUS, r_max), _series_start(N, nl, w0),
        method="DOP853", rtol=1e-12, atol=1e-14, events=(crosses, turns),
    )
    if sol.t_events[0].size:
        return 1
    if sol.t_events[1].size:
        return -1
    return 0


def _bisect_center(N, nl):
    lo = 0.5
    if _classify(N, nl, lo) != -1:
        raise NoGroundState("lower bracket does not undershoot")
    hi = 2.0
    while _classify(N, nl, hi) != 1:
        lo = hi
        hi *= 2.0
        if hi > 1e3:
            raise NoGroundState("no overshooting centre value below 1e3")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        side = _classify(N, nl, mid)
        if side == 0:
            return mid
        if side > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _integrate(N, nl, y0, r0, r1, t_eval=None):
    sol = integrate.solve_ivp(
        _rhs(N, nl), (r0, r1), y0, method="DOP853",
        rtol=1e-13, atol=1e-300, t_eval=t_eval,
    )
    if not sol.success:
        raise ToleranceNotReached(sol.message)
    return sol


def _match(N, nl, w0_guess, A_guess, r_match, R):
    """Polish (w0, A) so the forward and backward legs join smoothly."""

    def mismatch(x):
        w0, A = x
        fwd = _integrate(N, nl, _series_start(N, nl, w0), _START_RADIUS, r_match)
        yb = np.array([A * _tail_shape(N, R), A * _tail_shape_prime(N, R)])
        bwd = _integrate(N, nl, yb, R, r_match)
        return fwd.y[:, -1] - bwd.y[:, -1]

    x = np.array([w0_guess, A_guess])
    for _ in range(30):
        g = mismatch(x)
        J = np.empty((2, 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = 1e-7 * max(1.0, abs(x[k]))
            J[:, k] = (mismatch(x + dx) - mismatch(x - dx)) / (2 * dx[k])
        step = np.linalg.solve(J, -g)
        x = x + step
        if np.all(np.abs(step) <= 1e-15 * np.abs(x)):
            break
    return x


def _radius_where(N, A, level):
    """Smallest r with ``A t(r) <= level`` (tail formula)."""
    lo, hi = 1.0, 2.0
    while A * _tail_shape(N, hi) > level:
        hi *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if A * _tail_shape(N, mid) > level:
            lo = mid
        else:
            hi = mid
    return hi


def _fd_residual(N, nl, r, w, wp):
    """ODE residual with a fourth-order central difference of ``w'``."""
    h = r[1] - r[0]
    wpp = (-wp[4:] + 8 * wp[3:-1] - 8 * wp[1:-3] + wp[:-4]) / (12 * h)
    rr = r[2:-2]
    return wpp + (N - 1) / rr * wp[2:-2] - w[2:-2] + nl.f(w[2:-2])


def solve_profile(N: int, nl: Nonlinearity | None = None, tol: float = 1e-9,
                  h: float | None = None) -> Profile:
    """Solve the limiting radial problem.

    Parameters
    ----------
    N : int
        Dimension, 1 to 3.
    nl : Nonlinearity, optional
        Defaults to the cubic nonlinearity (p = 3).
    tol : float
        Target for the finite-difference ODE residual relative to ``max w``.
    h : float, optional
        Node spacing; by default chosen from ``tol`` and halved until the
        residual target is met.
    """
    nl = nl or Nonlinearity()
    if N not in (1, 2, 3):
        raise ValidationError("profile solver supports N in {1, 2, 3}")
    if N == 3 and not nl.p < 6:
        raise ValidationError("p must be subcritical (p < 6) for N = 3")
    if not tol > 0:
        raise ValidationError("tol must be positive")

    w0 = _bisect_center(N, nl)

    # amplitude guess from the bisected trajectory where it is still reliable
    probe = _integrate(N, nl, _series_start(N, nl, w0), _START_RADIUS, 6.0)
    A_guess = probe.y[0, -1] / _tail_shape(N, 6.0)
    r_cut = _radius_where(N, A_guess, _SWITCH_LEVEL)
    R = r_cut + 12.0
    r_match = 2.0
    w0, A = _match(N, nl, w0, A_guess, r_match, R)
    r_cut = _radius_where(N, A, _SWITCH_LEVEL)

    if h is None:
        h = float(np.clip(0.5 * tol ** 0.25, 1e-3, 1e-2))
    for _ in range(5):
        n_nodes = int(math.ceil((r_cut + 4 * h) / h)) + 1
        r = h * np.arange(n_nodes)
        fwd_nodes = r[(r > 0) & (r <= r_match)]
        bwd_nodes = r[r > r_match][::-1]
        fwd = _integrate(N, nl, _series_start(N, nl, w0), _START_RADIUS, r_match,
                         t_eval=fwd_nodes)
        yb = np.array([A * _tail_shape(N, R), A * _tail_shape_prime(N, R)])
        bwd = _integrate(N, nl, yb, R, r_match, t_eval=bwd_nodes)
        w = np.concatenate([[w0], fwd.y[0], bwd.y[0][::-1]])
        wp = np.concatenate([[0.0], fwd.y[1], bwd.y[1][::-1]])
        res = _fd_residual(N, nl, r, w, wp)
        if np.max(np.abs(res)) <= tol * w0:
            break
        h *= 0.5
    else:
        raise ToleranceNotReached(
            f"ODE residual {np.max(np.abs(res)):.3e} above {tol * w0:.3e} after refinement")

    below = np.nonzero(w < _SWITCH_LEVEL)[0]
    k_star = int(below[0]) if below.size else len(r) - 1
    return Profile(dim=N, nonlinearity=nl, w0=float(w0), r=r[: k_star + 1],
                   w=w[: k_star + 1], wp=wp[: k_star + 1], A=float(A),
                   r_star=float(r[k_star]), tol=tol)


def ode_residual(pr: Profile) -> np.ndarray:
    """Finite-difference ODE residual on the node table."""
    return _fd_residual(pr.dim, pr.nonlinearity, pr.r, pr.w, pr.wp)


def decay_amplitude(pr: Profile) -> float:
    """Plateau of ``w / t(r)`` over the last decade of the table."""
    if pr.w[-1] >= _SWITCH_LEVEL * 1.0000001:
        raise NoPlateau("profile table does not reach w < 1e-8")
    sel = pr.r >= pr.r_star - math.log(10.0)
    g = pr.w[sel] / _tail_shape(pr.dim, pr.r[sel])
    mean = float(np.mean(g))
    flat = float((g.max() - g.min()) / mean)
    if flat > 1e-2:
        raise NoPlateau(f"tail ratio varies by {flat:.2e} over the last decade")
    return mean


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def _gl_panels(a, b, width, order):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    n_pan = max(1, int(math.ceil((b - a) / width)))
    edges = np.linspace(a, b, n_pan + 1)
    x, wts = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return (mid + half * x).ravel(), (half * wts).ravel()


def _sphere_area(N):
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def _c3_weight(N, r):
    """``(2 pi)^(N/2) r^(1-N/2) I_(N/2-1)(r) e^(-r)``, the sphere average of e^(x1)."""
    nu = 0.5 * N - 1.0
    return (2 * math.pi) ** (N / 2) * r ** (1 - N / 2) * special.ive(nu, r)


def _outer_radius(pr: Profile, rel=1e-11):
    """Radius beyond which the slowest integrand (``f(w) e^r``) is negligible."""
    N, nl = pr.dim, pr.nonlinearity
    R = pr.r_star + 10.0
    scale = None
    for _ in range(400):
        rr = np.array([1.0, R])
        vals = nl.f(eval_w(pr, rr)) * rr ** (N - 1) * _c3_weight(N, rr)
        if scale is None:
            scale = vals[0]
        if vals[1] / (nl.p - 2.0) < rel * scale:
            return R
        R += 5.0
    raise DivergentIntegral("integrand decays too slowly; p too close to 2")


@dataclass(frozen=True)
class ReducedConstants:
    """Coefficients of the reduced energy (per-spike ``c1``)."""

    c1_unit: float
    c2: float
    c3: float
    c4: float

    def c1(self, ell: int) -> float:
        return ell * self.c1_unit


def _radial_moments(pr: Profile):
    N, nl = pr.dim, pr.nonlinearity
    R = _outer_radius(pr)
    r, wt = _gl_panels(0.0, R, 0.25, 12)
    w = eval_w(pr, r)
    wp = eval_w_prime(pr, r)
    jac = _sphere_area(N) * r ** (N - 1) * wt
    return dict(
        w2=float(np.sum(jac * w * w)),
        grad2=float(np.sum(jac * wp * wp)),
        Fw=float(np.sum(jac * nl.F(w))),
        fww=float(np.sum(jac * nl.f(w) * w)),
        fp_wp2=float(np.sum(jac * nl.fprime(w) * wp * wp)),
        c3=float(np.sum(nl.f(w) * r ** (N - 1) * _c3_weight(N, r) * np.exp(r) * wt)),
    )


def compute_constants(pr: Profile) -> ReducedConstants:
    """Reduction constants ``c1_unit, c2, c3, c4`` by radial quadrature."""
    if not pr.p > 2:
        raise DivergentIntegral("c3 requires p > 2")
    m = _radial_moments(pr)
    c2 = 0.5 * m["w2"]
    c1_unit = 0.5 * (m["grad2"] + m["w2"]) - m["Fw"]
    c3 = m["c3"]
    return ReducedConstants(c1_unit=c1_unit, c2=c2, c3=c3, c4=min(c2, c3))


def pohozaev_defect(pr: Profile) -> float:
    """Relative defect of ``int |grad w|^2 + int w^2 = int f(w) w``."""
    m = _radial_moments(pr)
    return abs(m["grad2"] + m["w2"] - m["fww"]) / m["fww"]


def kernel_h1_norm(pr: Profile) -> tuple[float, float]:
    """``||d w / d x_1||^2_{H^1}`` computed two ways.

    Returns the direct value ``int (|grad d1 w|^2 + (d1 w)^2)`` and the value
    ``(1/N) int f'(w) w'^2`` that follows from ``d1 w`` lying in the kernel.
    """
    N = pr.dim
    R = pr.r_star + 10.0
    r, wt = _gl_panels(0.0, R, 0.25, 12)
    w = eval_w(pr, r)
    wp = eval_w_prime(pr, r)
    wpp = -(N - 1) / r * wp + w - pr.nonlinearity.f(w)
    jac = _sphere_area(N) * r ** (N - 1) * wt
    b = wp / r
    direct = np.sum(jac * ((wpp ** 2 - b ** 2) / N + b ** 2 + wp ** 2 / N))
    if N == 1:
        direct = np.sum(jac * (wpp ** 2 + wp ** 2))
    via_kernel = np.sum(jac * pr.nonlinearity.fprime(w) * wp ** 2) / N
    return float(direct), float(via_kernel)


# ---------------------------------------------------------------------------
# interaction integral
# ---------------------------------------------------------------------------

def _angular_rule(N):
    """Nodes ``cos(phi)`` and weights for integrating over the unit sphere."""
    if N == 1:
        return np.array([1.0, -1.0]), np.array([1.0, 1.0])
    # graded toward phi = pi where |x + rho e1| is smallest
    u_edges = np.concatenate([[0.0], 0.005 * 2.0 ** np.arange(0, 10)])
    u_edges = u_edges[u_edges < math.pi]
    u_edges = np.append(u_edges, math.pi)
    x, wts = np.polynomial.legendre.leggauss(16)
    mid = 0.5 * (u_edges[1:] + u_edges[:-1])[:, None]
    half = 0.5 * (u_edges[1:] - u_edges[:-1])[:, None]
    u = (mid + half * x).ravel()
    wu = (half * wts).ravel()
    phi = math.pi - u
    area = _sphere_area(N - 1)
    return np.cos(phi), area * np.sin(phi) ** (N - 2) * wu


def _xi_pair(pr: Profile, rho: float, rule=None):
    N, nl = pr.dim, pr.nonlinearity
    if rule is None:
        rule = _interaction_rule(pr)
    r, wr, cphi, wphi, fw = rule
    d2 = r[:, None] ** 2 + rho * rho + 2.0 * rho * r[:, None] * cphi[None, :]
    d = np.sqrt(np.maximum(d2, 0.0))
    wd = eval_w(pr, d)
    wpd = eval_w_prime(pr, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        proj = np.where(d > 0, (r[:, None] * cphi[None, :] + rho) / d, 0.0)
    radial = fw * r ** (N - 1) * wr
    xi = float(radial @ (wd @ wphi))
    xip = float(radial @ ((wpd * proj) @ wphi))
    return xi, xip


def _interaction_rule(pr: Profile):
    R = _outer_radius(pr)
    r, wr = _gl_panels(0.0, R, 0.5, 12)
    cphi, wphi = _angular_rule(pr.dim)
    fw = pr.nonlinearity.f(eval_w(pr, r))
    return r, wr, cphi, wphi, fw


def interaction_xi(pr: Profile, rho: float) -> float:
    """``xi(rho) = int f(w(x)) w(x + rho e1) dx`` by 2D quadrature."""
    if not rho > 0:
        raise ValidationError("rho must be positive")
    return _xi_pair(pr, rho)[0]


def interaction_xi_prime(pr: Profile, rho: float) -> float:
    """``xi'(rho) = int f(w(x)) w'(|x + rho e1|) (x1 + rho)/|x + rho e1| dx``."""
    if not rho > 0:
        raise ValidationError("rho must be positive")
    return _xi_pair(pr, rho)[1]


class InteractionKernel:
    """Tabulated ``xi`` with a Hermite interpolant using the exact ``xi'``.

    Beyond the table the kernel is continued by ``xi(rho_max) w(rho)/w(rho_max)``,
    which is where both have long reached their common exponential tail.
    """

    def __init__(self, pr: Profile, rho_max: float = 25.0, step: float = 0.125):
        rule = _interaction_rule(pr)
        rho = np.arange(0.0, rho_max + 0.5 * step, step)
        rho[0] = 1e-9
        vals = np.array([_xi_pair(pr, x, rule) for x in rho])
        rho[0] = 0.0
        vals[0, 1] = 0.0
        self.profile = pr
        self.rho = rho
        self.xi = vals[:, 0]
        self.xip = vals[:, 1]
        self.rho_max = float(rho[-1])
        self._spl = CubicHermiteSpline(rho, self.xi, self.xip)
        self._dspl = self._spl.derivative()
        self._scale = self.xi[-1] / eval_w(pr, self.rho_max)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.where(rho <= self.rho_max, self._spl(np.minimum(rho, self.rho_max)),
                       self._scale * eval_w(self.profile, np.maximum(rho, self.rho_max)))
        return out if out.ndim else float(out)

    def derivative(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.where(rho <= self.rho_max, self._dspl(np.minimum(rho, self.rho_max)),
                       self._scale * eval_w_prime(self.profile, np.maximum(rho, self.rho_max)))
        return out if out.ndim else float(out)


_KERNELS: dict[int, InteractionKernel] = {}


def interaction_kernel(pr: Profile) -> InteractionKernel:
    """Shared tabulated kernel for ``pr`` (built once per profile object)."""
    key = id(pr)
    ker = _KERNELS.get(key)
    if ker is None or ker.profile is not pr:
        ker = InteractionKernel(pr)
        _KERNELS[key] = ker
    return ker


def c3_from_interaction(pr: Profile, rhos=(12.0, 16.0, 20.0, 24.0, 28.0), degree=3) -> float:
    """Extrapolate ``xi(rho)/w(rho)`` to ``rho -> inf`` as a polynomial in 1/rho."""
    rule = _interaction_rule(pr)
    rhos = np.asarray(rhos, dtype=float)
    ratio = np.array([_xi_pair(pr, x, rule)[0] for x in rhos]) / eval_w(pr, rhos)
    coef = np.polyfit(1.0 / rhos, ratio, degree)
    return float(coef[-1])


# ---------------------------------------------------------------------------
# nondegeneracy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NondegeneracyReport:
    mode0_min_abs: float
    mode1_min_abs: float
    mode1_overlap: float
    mode0_eigs: np.ndarray
    mode1_eigs: np.ndarray

    @property
    def ok(self) -> bool:
        return self.mode1_min_abs <= 1e-4 and self.mode0_min_abs > 1e-4


def _radial_operator(pr: Profile, m: int, h: float, R: float):
    """Symmetrised cell-centred discretisation of the mode-m linearisation."""
    N = pr.dim
    K = int(round(R / h))
    rc = (np.arange(1, K + 1) - 0.5) * h
    rf = np.arange(0, K + 1) * h  # faces; rf[0] = 0
    flux = rf ** (N - 1)
    mass = rc ** (N - 1) * h
    pot = -m * (m + N - 2) / rc ** 2 - 1.0 + pr.nonlinearity.fprime(eval_w(pr, rc))
    diag = -(flux[:-1] + flux[1:]) / h + mass * pot
    off = flux[1:-1] / h
    s = 1.0 / np.sqrt(mass)
    return rc, mass, diag * s * s, off * s[:-1] * s[1:], s


def verify_nondegeneracy(pr: Profile, h: float = 0.0025, R: float | None = None,
                         strict: bool = True) -> NondegeneracyReport:
    """Smallest-|eigenvalue| check of the linearisation in angular modes 0 and 1.

    Mode 1 must carry the translation kernel ``w'``; mode 0 must not carry a
    near-zero eigenvalue.
    """
    if pr.dim < 2:
        raise ValidationError("nondegeneracy check needs N >= 2")
    R = R or min(pr.r_star, 20.0)
    out = {}
    for m in (0, 1):
        rc, mass, d, e, s = _radial_operator(pr, m, h, R)
        eigs = linalg.eigh_tridiagonal(d, e, eigvals_only=True)
        k = int(np.argmin(np.abs(eigs)))
        out[m] = (eigs, k)
        if m == 1:
            _, vec = linalg.eigh_tridiagonal(d, e, select="i", select_range=(k, k))
            u = vec[:, 0] * s  # back to the unsymmetrised variable
            ref = eval_w_prime(pr, rc)
            overlap = abs(np.sum(mass * u * ref)) / math.sqrt(
                np.sum(mass * u * u) * np.sum(mass * ref * ref))
    e0, k0 = out[0]
    e1, k1 = out[1]
    rep = NondegeneracyReport(
        mode0_min_abs=float(abs(e0[k0])), mode1_min_abs=float(abs(e1[k1])),
        mode1_overlap=float(overlap), mode0_eigs=e0[e0 > -5.0], mode1_eigs=e1[e1 > -5.0])
    if strict and rep.mode0_min_abs <= 1e-4:
        raise NondegeneracyFailed(
            f"radial mode has eigenvalue {rep.mode0_min_abs:.2e}; (f3) fails for p={pr.p}")
    return rep


def domination_constant(pr: Profile, n_samples: int = 200, radius: float = 30.0,
                        rng: np.random.Generator | None = None) -> float:
    """Max of ``w(z) w(z + xi) / w(xi)`` over random pairs with |z|, |xi| <= radius."""
    rng = rng if rng is not None else np.random.default_rng(0)
    N = pr.dim

    def ball(n):
        v = rng.standard_normal((n, N))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v * radius * rng.random((n, 1)) ** (1.0 / N)

    z, xi = ball(n_samples), ball(n_samples)
    num = eval_w(pr, np.linalg.norm(z, axis=1)) * eval_w(pr, np.linalg.norm(z + xi, axis=1))
    return float(np.max(num / eval_w(pr, np.linalg.norm(xi, axis=1))))


# ---------------------------------------------------------------------------
# cache file
# ---------------------------------------------------------------------------

def save_profile(pr: Profile, path) -> Path:
    """Write the profile table as CSV; floats use ``repr`` so reads are exact."""
    path = Path(path)
    lines = [f"# spike-cluster profile v{CACHE_VERSION}, {pr.dim}, {pr.p!r}, "
             f"{pr.w0!r}, {pr.A!r}, {pr.r_star!r}"]
    lines += [f"{a!r},{b!r},{c!r}" for a, b, c in zip(pr.r.tolist(), pr.w.tolist(), pr.wp.tolist())]
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def load_profile(path, tol: float = float("nan")) -> Profile:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# spike-cluster profile v"):
            raise ValidationError(f"{path} is not a profile cache file")
        fields = [s.strip() for s in header[len("# spike-cluster profile v"):].split(",")]
        if int(fields[0]) != CACHE_VERSION:
            raise ValidationError(f"unsupported profile cache version {fields[0]}")
        dim, p, w0, A, r_star = int(fields[1]), float(fields[2]), float(fields[3]), \
            float(fields[4]), float(fields[5])
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Profile(dim=dim, nonlinearity=Nonlinearity(p), w0=w0, r=table[:, 0], w=table[:, 1],
                   wp=table[:, 2], A=A, r_star=r_star, tol=tol)


def cache_path(directory, N: int, p: float, tol: float) -> Path:
    return Path(directory) / f"profile_N{N}_p{p!r}_tol{tol!r}.csv"


def get_profile(N: int, p: float = 3.0, tol: float = 1e-9, cache_dir=None,
                cache_only: bool = False) -> Profile:
    """Load a cached profile or solve and persist it."""
    from .errors import CacheMiss

    if cache_dir is not None:
        path = cache_path(cache_dir, N, p, tol)
        if path.exists():
            return load_profile(path, tol=tol)
        if cache_only:
            raise CacheMiss(f"no cached profile at {path}")
    elif cache_only:
        raise CacheMiss("cache-only requested without a cache directory")
    pr = solve_profile(N, Nonlinearity(p), tol)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        # reload so a fresh solve and a cache hit feed identical data downstream
        return load_profile(save_profile(pr, cache_path(cache_dir, N, p, tol)), tol=tol)
    return pr


