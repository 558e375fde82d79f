"""Direct 2D grid realisation of ``S[v] = eps^2 Lap v - V v + f(v)``.

Everything lives on a uniform node grid over ``[-L, L]^2`` with homogeneous
Dirichlet data.  The discrete energy uses the edge form of the Dirichlet
integral so that its gradient is exactly ``-h^2 S_h[v]`` with the 5-point
Laplacian.

Linear solves use MINRES with a fast-sine-transform preconditioner
``(1 - eps^2 Lap_h)^-1``.  The projected (Lyapunov-Schmidt) problem is solved
as a symmetric bordered system in ``(phi, alpha)``; its block preconditioner
uses the same transform plus the small dense Schur block.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft
from scipy.sparse.linalg import LinearOperator, minres

from .errors import (
    LinearSolveStagnation,
    NewtonDiverged,
    SpikeNearBoundary,
    TrivialCollapse,
    UnderResolved,
    ValidationError,
)
from .potential import SaddlePotential, SpikeConfig
from .profile import (
    Nonlinearity,
    Profile,
    ReducedConstants,
    compute_constants,
    eval_w,
    eval_w_prime,
    interaction_kernel,
)

__all__ = [
    "Grid",
    "GridField",
    "LSParameters",
    "CorrectionResult",
    "Peak",
    "MomentReport",
    "setup_grid",
    "cutoff",
    "assemble_ansatz",
    "residual",
    "energy",
    "z_functions",
    "projected_solve",
    "reduced_energy_numeric",
    "single_spike_reference",
    "expansion_defect",
    "newton_solve",
    "extract_peaks",
    "weighted_norm",
    "moment_check",
    "canonical_pair",
    "save_field_binary",
    "load_field_binary",
    "save_field_csv",
    "write_jsonl",
]

_RES_SLACK = 1.0 + 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform ``n x n`` node grid on ``[-L, L]^2``; ``n`` odd so 0 is a node."""

    L: float
    n: int

    def __post_init__(self):
        if not (self.n >= 3 and self.n % 2 == 1):
            raise ValidationError("grid needs an odd node count n >= 3")
        if not self.L > 0:
            raise ValidationError("box half-width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def mesh(self):
        return np.meshgrid(self.x, self.x, indexing="ij")

    def points(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.stack([X, Y], axis=-1)

    @classmethod
    def resolving(cls, eps: float, L: float, ratio: float = 8.0) -> "Grid":
        """Smallest odd grid with ``h <= eps / ratio``."""
        n = int(math.ceil(2.0 * L * ratio / eps)) + 1
        n += 1 - n % 2
        return cls(L, n)


@dataclass(eq=False)
class GridField:
    """Node values (row-major, first index along x) on a :class:`Grid`."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValidationError(f"field shape {self.values.shape} does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("field has non-finite values")

    def __add__(self, other):
        return GridField(self.values + _vals(other), self.grid)

    def __sub__(self, other):
        return GridField(self.values - _vals(other), self.grid)

    def __neg__(self):
        return GridField(-self.values, self.grid)

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def inner(self, other) -> float:
        """Discrete L2 product ``h^2 sum u v``."""
        return float(self.grid.h ** 2 * np.sum(self.values * _vals(other)))


def _vals(u):
    return u.values if isinstance(u, GridField) else np.asarray(u)


@dataclass(frozen=True)
class LSParameters:
    """Scales of the reduction: ``eps``, ``beta``, ``sigma``, the *-norm
    exponent ``mu`` and the cut-off radii ``(R0, R1)``."""

    epsilon: float
    beta: float
    sigma: float
    mu: float
    R0: float
    R1: float
    clearance: float = 5.0  # spikes must keep clearance * eps log(1/eps) from the box edge

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not 0 < self.beta < 1:
            raise ValidationError("beta must lie in (0, 1)")
        if not 0 < self.mu < self.sigma:
            raise ValidationError("mu must lie in (0, sigma)")
        if not 0 < self.R0 < self.R1:
            raise ValidationError("cut-off radii need 0 < R0 < R1")
        if not self.clearance > 0:
            raise ValidationError("clearance factor must be positive")

    @property
    def eta(self) -> float:
        return self.beta ** 2 * (1.0 + self.sigma)

    @classmethod
    def for_box(cls, eps, beta, nl: Nonlinearity, L, mu=None, radii=(0.6, 0.8), clearance=5.0):
        sigma = nl.sigma
        return cls(eps, beta, sigma, 0.5 * sigma if mu is None else mu,
                   radii[0] * L, radii[1] * L, clearance)


def setup_grid(eps: float, beta: float, pot: SaddlePotential, nl: Nonlinearity,
               ratio: float = 8.0, v_floor: float = 0.25, n_max: int = 1025,
               radii=(0.6, 0.8), clearance: float = 5.0):
    """Box, grid and parameters for one ladder point.

    The half-width is ``10 max(eps log(1/eps), eps^beta)`` capped so that
    ``inf V`` over the box stays above ``v_floor``.
    """
    if pot.N != 2:
        raise ValidationError("the grid solver is two-dimensional")
    L = 10.0 * max(eps * math.log(1.0 / eps), eps ** beta)
    L = min(L, pot.max_half_width(v_floor))
    g = Grid.resolving(eps, L, ratio)
    if g.n > n_max:
        raise UnderResolved(f"resolving eps={eps} needs n={g.n} > {n_max}")
    return LSParameters.for_box(eps, beta, nl, L, radii=radii, clearance=clearance), g


def cutoff(r, R0: float, R1: float):
    """C^2 bump: 1 for r <= R0, 0 for r >= R1, quintic smoothstep between."""
    s = np.clip((np.asarray(r, dtype=float) - R0) / (R1 - R0), 0.0, 1.0)
    return 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _cutoff_dr(r, R0, R1):
    s = np.clip((np.asarray(r, dtype=float) - R0) / (R1 - R0), 0.0, 1.0)
    return -30.0 * s * s * (1.0 - s) ** 2 / (R1 - R0)


def _check_clearance(cfg: SpikeConfig, g: Grid, factor: float = 5.0):
    eps = cfg.epsilon
    need = factor * eps * math.log(1.0 / eps)
    gap = g.L - np.max(np.abs(cfg.points))
    if gap < need:
        raise SpikeNearBoundary(f"spike within {gap:.3g} of the box edge (need {need:.3g})")
    if cfg.N != 2:
        raise ValidationError("grid fields are two-dimensional")


def _check_resolved(params: LSParameters, g: Grid):
    if g.h > params.epsilon / 8.0 * _RES_SLACK:
        raise UnderResolved(f"h = {g.h:.4g} exceeds eps/8 = {params.epsilon / 8:.4g}")


def _spike(pr, g, P, eps):
    X, Y = g.mesh()
    return eval_w(pr, np.hypot(X - P[0], Y - P[1]) / eps)


def assemble_ansatz(cfg: SpikeConfig, pr: Profile, params: LSParameters, g: Grid) -> GridField:
    """``chi(x) * sum_i tau_i w((x - P_i)/eps)``."""
    _check_clearance(cfg, g, params.clearance)
    X, Y = g.mesh()
    chi = cutoff(np.hypot(X, Y), params.R0, params.R1)
    u = np.zeros_like(X)
    for P, t in zip(cfg.points, cfg.signs):
        u += t * _spike(pr, g, P, cfg.epsilon)
    return GridField(chi * u, g)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _lap_interior(u, h):
    return (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * u[1:-1, 1:-1]) / (h * h)


def _V_grid(pot, g):
    return pot.V(g.points())


def residual(v: GridField, params: LSParameters, pot, nl: Nonlinearity) -> GridField:
    """``S_eps[v]`` on interior nodes, zero on the boundary."""
    g = v.grid
    _check_resolved(params, g)
    u = v.values
    out = np.zeros_like(u)
    V = _V_grid(pot, g)
    out[1:-1, 1:-1] = (params.epsilon ** 2 * _lap_interior(u, g.h)
                       - V[1:-1, 1:-1] * u[1:-1, 1:-1] + nl.f(u[1:-1, 1:-1]))
    return GridField(out, g)


def energy(v: GridField, params: LSParameters, pot, nl: Nonlinearity) -> float:
    """``1/2 int (eps^2 |grad v|^2 + V v^2) - int F(v)`` on the grid.

    The gradient part is the edge sum of squared differences (trapezoidal
    weights along the box boundary); node terms use trapezoidal weights.
    """
    g = v.grid
    _check_resolved(params, g)
    u = v.values
    dx = np.diff(u, axis=0) ** 2
    dy = np.diff(u, axis=1) ** 2
    dx[:, 0] *= 0.5
    dx[:, -1] *= 0.5
    dy[0, :] *= 0.5
    dy[-1, :] *= 0.5
    grad_part = 0.5 * params.epsilon ** 2 * (np.sum(dx) + np.sum(dy))
    wt = np.ones(g.n)
    wt[0] = wt[-1] = 0.5
    W = np.outer(wt, wt)
    node = np.sum(W * (0.5 * _V_grid(pot, g) * u * u - nl.F(u)))
    return float(grad_part + g.h ** 2 * node)


class _UnitPotential:
    """``V = 1``; used for the single-spike reference energy."""

    N = 2

    @staticmethod
    def V(x):
        return np.ones(np.shape(x)[:-1])


class _Operators:
    """Interior-node linear algebra shared by the Newton solvers."""

    def __init__(self, g: Grid, params: LSParameters, pot, nl: Nonlinearity, shift: float = 1.0):
        self.g = g
        self.m = g.n - 2
        self.eps2 = params.epsilon ** 2
        self.V = _V_grid(pot, g)[1:-1, 1:-1]
        self.nl = nl
        k = np.arange(1, self.m + 1)
        lam = 4.0 / g.h ** 2 * np.sin(np.pi * k / (2.0 * (self.m + 1))) ** 2
        self.inv_symbol = 1.0 / (shift + self.eps2 * (lam[:, None] + lam[None, :]))

    def lap(self, x):
        u = np.zeros((self.m + 2, self.m + 2))
        u[1:-1, 1:-1] = x.reshape(self.m, self.m)
        return _lap_interior(u, self.g.h).ravel()

    def linear(self, v_int):
        """Linearisation ``eps^2 Lap - V + f'(v)`` at interior values ``v_int``."""
        pot_diag = -self.V.ravel() + self.nl.fprime(np.ravel(v_int))
        n = self.m * self.m

        def mv(x):
            return self.eps2 * self.lap(x) + pot_diag * x

        return LinearOperator((n, n), matvec=mv, dtype=float)

    def precond_apply(self, x):
        y = fft.dstn(x.reshape(self.m, self.m), type=1, norm="ortho")
        return fft.idstn(y * self.inv_symbol, type=1, norm="ortho").ravel()

    def precond(self):
        n = self.m * self.m
        return LinearOperator((n, n), matvec=self.precond_apply, dtype=float)


def _minres(A, b, M, rtol, maxiter):
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = minres(A, b, M=M, rtol=rtol, maxiter=maxiter, callback=cb)
    if info != 0:
        raise LinearSolveStagnation(f"MINRES stopped with info={info} after {count[0]} iterations")
    return x, count[0]


def z_functions(cfg: SpikeConfig, pr: Profile, params: LSParameters, g: Grid,
                pot: SaddlePotential) -> list:
    """``Z_{i,n} = (V - eps^2 Lap_h) d/dx_n (chi w_{P_i})`` for each spike i and axis n.

    Ordered spike-major: ``[Z_{1,1}, Z_{1,2}, Z_{2,1}, ...]``.
    """
    _check_clearance(cfg, g, params.clearance)
    eps = cfg.epsilon
    X, Y = g.mesh()
    rr = np.hypot(X, Y)
    chi = cutoff(rr, params.R0, params.R1)
    dchi = _cutoff_dr(rr, params.R0, params.R1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(rr > 0, X / rr, 0.0)
        uy = np.where(rr > 0, Y / rr, 0.0)
    V = _V_grid(pot, g)
    out = []
    for P in cfg.points:
        dX, dY = X - P[0], Y - P[1]
        d = np.hypot(dX, dY)
        w = eval_w(pr, d / eps)
        wp = eval_w_prime(pr, d / eps)
        with np.errstate(invalid="ignore", divide="ignore"):
            gx = np.where(d > 0, wp * dX / (d * eps), 0.0)
            gy = np.where(d > 0, wp * dY / (d * eps), 0.0)
        for grad_w, unit in ((gx, ux), (gy, uy)):
            D = chi * grad_w + w * dchi * unit
            D[0, :] = D[-1, :] = D[:, 0] = D[:, -1] = 0.0
            Z = np.zeros_like(D)
            Z[1:-1, 1:-1] = V[1:-1, 1:-1] * D[1:-1, 1:-1] - eps ** 2 * _lap_interior(D, g.h)
            out.append(GridField(Z, g))
    return out


def _derivative_fields(cfg, pr, params, g):
    """Analytic ``d/dx_n (chi w_{P_i})`` in the same order as :func:`z_functions`."""
    eps = cfg.epsilon
    X, Y = g.mesh()
    rr = np.hypot(X, Y)
    chi = cutoff(rr, params.R0, params.R1)
    dchi = _cutoff_dr(rr, params.R0, params.R1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(rr > 0, X / rr, 0.0)
        uy = np.where(rr > 0, Y / rr, 0.0)
    out = []
    for P in cfg.points:
        dX, dY = X - P[0], Y - P[1]
        d = np.hypot(dX, dY)
        w = eval_w(pr, d / eps)
        wp = eval_w_prime(pr, d / eps)
        with np.errstate(invalid="ignore", divide="ignore"):
            gx = np.where(d > 0, wp * dX / (d * eps), 0.0)
            gy = np.where(d > 0, wp * dY / (d * eps), 0.0)
        out.append(GridField(chi * gx + w * dchi * ux, g))
        out.append(GridField(chi * gy + w * dchi * uy, g))
    return out


# ---------------------------------------------------------------------------
# projected problem
# ---------------------------------------------------------------------------

@dataclass
class CorrectionResult:
    phi: GridField
    alphas: np.ndarray  # (ell, N): S[chi w_P + phi] = sum alpha_in Z_in
    residual_norms: list  # bordered-system residual max-norm per Newton step
    projected_residual: float
    orth_defects: np.ndarray  # |<phi, Z>| / (|phi| |Z|)
    newton_steps: int
    linear_iterations: list
    log: list = field(default_factory=list)


def projected_solve(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential, nl: Nonlinearity,
                    params: LSParameters, g: Grid, tol: float = 1e-9, max_iter: int = 25,
                    lin_rtol: float = 1e-10, lin_maxiter: int = 2000) -> CorrectionResult:
    """Find ``phi`` orthogonal to every ``Z_{i,n}`` with
    ``S[chi w_P + phi] = sum alpha_in Z_in``.

    Newton on the symmetric bordered system ``[[L, Z], [Z^T, 0]]``; each step
    is a preconditioned MINRES solve.  Converges when the max-norm of the
    residual projected off ``span Z`` is below ``tol``.
    """
    _check_resolved(params, g)
    u0 = assemble_ansatz(cfg, pr, params, g)
    Zs = z_functions(cfg, pr, params, g, pot)
    ops = _Operators(g, params, pot, nl)
    m = ops.m
    n = m * m
    Zmat = np.column_stack([z.values[1:-1, 1:-1].ravel() for z in Zs])
    znorm = np.linalg.norm(Zmat, axis=0)
    Zh = Zmat / znorm
    q = Zh.shape[1]
    G = Zh.T @ Zh
    MZ = np.column_stack([ops.precond_apply(Zh[:, k]) for k in range(q)])
    schur_inv = np.linalg.inv(Zh.T @ MZ)

    def project(x):
        return x - Zh @ np.linalg.solve(G, Zh.T @ x)

    u_int = u0.values[1:-1, 1:-1].ravel()
    phi = np.zeros(n)
    gam = np.zeros(q)

    def S_of(phi_vec):
        full = u0.values.copy()
        full[1:-1, 1:-1] += phi_vec.reshape(m, m)
        return residual(GridField(full, g), params, pot, nl).values[1:-1, 1:-1].ravel()

    def bordered_res(phi_vec, gam_vec):
        return np.concatenate([S_of(phi_vec) + Zh @ gam_vec, Zh.T @ phi_vec])

    M = LinearOperator((n + q, n + q), dtype=float, matvec=lambda x: np.concatenate(
        [ops.precond_apply(x[:n]), schur_inv @ x[n:]]))

    norms, lin_its, log = [], [], []
    F = bordered_res(phi, gam)
    Pres = np.max(np.abs(project(S_of(phi))))
    step = 0
    while Pres > tol:
        if step >= max_iter:
            raise NewtonDiverged(f"projected residual {Pres:.3e} after {max_iter} Newton steps")
        Lop = ops.linear(u_int + phi)
        A = LinearOperator((n + q, n + q), dtype=float, matvec=lambda x, Lop=Lop: np.concatenate(
            [Lop.matvec(x[:n]) + Zh @ x[n:], Zh.T @ x[:n]]))
        dx, its = _minres(A, -F, M, lin_rtol, lin_maxiter)
        phi = project(phi + dx[:n])
        gam = gam + dx[n:]
        F_new = bordered_res(phi, gam)
        step += 1
        new_P = np.max(np.abs(project(S_of(phi))))
        norms.append(float(np.max(np.abs(F_new))))
        lin_its.append(its)
        log.append({"iteration": step, "residual": float(new_P), "linear_iterations": its})
        if not np.isfinite(new_P) or new_P > 1e3 * max(Pres, tol):
            raise NewtonDiverged(f"projected residual grew to {new_P:.3e}")
        F, Pres = F_new, new_P

    phi_full = np.zeros((g.n, g.n))
    phi_full[1:-1, 1:-1] = phi.reshape(m, m)
    S = S_of(phi)
    alpha_hat = np.linalg.solve(G, Zh.T @ S)
    alphas = (alpha_hat / znorm).reshape(cfg.ell, cfg.N)
    pn = np.linalg.norm(phi)
    defects = np.abs(Zmat.T @ phi) / (max(pn, 1e-300) * znorm)
    return CorrectionResult(phi=GridField(phi_full, g), alphas=alphas, residual_norms=norms,
                            projected_residual=float(Pres), orth_defects=defects,
                            newton_steps=step, linear_iterations=lin_its, log=log)


def single_spike_reference(pr: Profile, params: LSParameters, g: Grid,
                           nl: Nonlinearity) -> float:
    """``eps^-2`` times the grid energy of one centred spike with ``V = 1``.

    This is the same-grid counterpart of ``c1_unit``; subtracting it removes
    the O((h/eps)^2) bias of the discrete Dirichlet form from energy
    comparisons.
    """
    cfg = SpikeConfig(params.epsilon, [[0.0, 0.0]], [1.0], params.beta)
    u = assemble_ansatz(cfg, pr, params, g)
    return energy(u, params, _UnitPotential(), nl) / params.epsilon ** 2


def _c1_reference(reference, pr, params, g, nl, rc):
    if reference == "exact":
        return (rc or compute_constants(pr)).c1_unit
    if reference == "grid":
        return single_spike_reference(pr, params, g, nl)
    raise ValidationError("reference must be 'exact' or 'grid'")


def reduced_energy_numeric(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential, nl: Nonlinearity,
                           params: LSParameters, g: Grid, rc: ReducedConstants | None = None,
                           correction: CorrectionResult | None = None, tol: float = 1e-9,
                           reference: str = "exact") -> float:
    """``eps^-N I_eps[chi w_P + phi_P] - ell c1``.

    ``reference="grid"`` replaces the continuum ``c1_unit`` by the same-grid
    single-spike energy (see :func:`single_spike_reference`).
    """
    corr = correction or projected_solve(cfg, pr, pot, nl, params, g, tol)
    v = assemble_ansatz(cfg, pr, params, g) + corr.phi
    c1 = _c1_reference(reference, pr, params, g, nl, rc)
    return energy(v, params, pot, nl) / cfg.epsilon ** 2 - cfg.ell * c1


def expansion_defect(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential, nl: Nonlinearity,
                     params: LSParameters, g: Grid, rc: ReducedConstants | None = None,
                     reference: str = "exact") -> float:
    """``|eps^-N I[chi w_P] - ell c1 - c2 sum (V(P_i)-1) + 1/2 sum tau_i tau_j xi(d_ij/eps)|``.

    Uses the ansatz only (no correction).  For the quadratic model the
    potential term is ``c2/2 sum M[P_i]^2``.
    """
    rc = rc or compute_constants(pr)
    u = assemble_ansatz(cfg, pr, params, g)
    c1 = _c1_reference(reference, pr, params, g, nl, rc)
    val = energy(u, params, pot, nl) / cfg.epsilon ** 2 - cfg.ell * c1
    val -= rc.c2 * float(np.sum(pot.V(cfg.points) - 1.0))
    if cfg.ell > 1:
        ker = interaction_kernel(pr)
        i, j = np.triu_indices(cfg.ell, 1)
        d = np.linalg.norm(cfg.points[i] - cfg.points[j], axis=1) / cfg.epsilon
        val += float(np.sum(cfg.signs[i] * cfg.signs[j] * ker(d)))
    return abs(val)


# ---------------------------------------------------------------------------
# full Newton
# ---------------------------------------------------------------------------

def newton_solve(v0: GridField, pot, nl: Nonlinearity, params: LSParameters, tol: float = 1e-9,
                 max_iter: int = 20, lin_rtol: float = 1e-10, lin_maxiter: int = 3000,
                 log: list | None = None) -> GridField:
    """Damped Newton for ``S_eps[v] = 0`` with Dirichlet data.

    Steps are halved (at most 20 times) until the residual max-norm drops.
    Entries ``{"iteration", "residual", "damping"}`` are appended to ``log``.
    """
    g = v0.grid
    _check_resolved(params, g)
    if v0.max_norm() < 1e-3:
        raise TrivialCollapse("seed is numerically zero; v = 0 already solves the equation")
    ops = _Operators(g, params, pot, nl)
    m = ops.m
    M = ops.precond()
    v = v0.values.copy()
    v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0

    def res_int(vals):
        return residual(GridField(vals, g), params, pot, nl).values[1:-1, 1:-1].ravel()

    R = res_int(v)
    rn = float(np.max(np.abs(R)))
    it = 0
    while rn > tol:
        if it >= max_iter:
            raise NewtonDiverged(f"residual {rn:.3e} after {max_iter} Newton steps")
        Lop = ops.linear(v[1:-1, 1:-1].ravel())
        dx, _ = _minres(Lop, -R, M, lin_rtol, lin_maxiter)
        dx = dx.reshape(m, m)
        t = 1.0
        for _ in range(21):
            trial = v.copy()
            trial[1:-1, 1:-1] += t * dx
            R_t = res_int(trial)
            rn_t = float(np.max(np.abs(R_t)))
            if rn_t < rn:
                break
            t *= 0.5
        else:
            raise NewtonDiverged("backtracking failed to reduce the residual")
        v, R, rn = trial, R_t, rn_t
        it += 1
        if log is not None:
            log.append({"iteration": it, "residual": rn, "damping": t})
    if np.max(np.abs(v)) < 1e-3:
        raise TrivialCollapse("Newton iteration collapsed onto v = 0")
    return GridField(v, g)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    position: np.ndarray
    sign: int
    height: float


def _parabola_offset(fm, f0, fp):
    den = fm - 2.0 * f0 + fp
    return 0.0 if den == 0 else 0.5 * (fm - fp) / den


def extract_peaks(v: GridField, w0: float, threshold: float = 0.5) -> list:
    """Local maxima of ``|v|`` above ``threshold * w0`` with parabolic sub-grid refinement."""
    a = np.abs(v.values)
    g = v.grid
    core = a[1:-1, 1:-1]
    is_max = core > threshold * w0
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = a[1 + di: a.shape[0] - 1 + di, 1 + dj: a.shape[1] - 1 + dj]
            is_max &= core >= nb
    peaks = []
    for i, j in zip(*np.nonzero(is_max)):
        i, j = i + 1, j + 1
        ox = _parabola_offset(a[i - 1, j], a[i, j], a[i + 1, j])
        oy = _parabola_offset(a[i, j - 1], a[i, j], a[i, j + 1])
        pos = np.array([g.x[i] + ox * g.h, g.x[j] + oy * g.h])
        peaks.append(Peak(pos, int(np.sign(v.values[i, j])), float(a[i, j])))
    peaks.sort(key=lambda p: (round(p.position[0], 12), round(p.position[1], 12)))
    return peaks


def weighted_norm(v: GridField, cfg: SpikeConfig, pr: Profile, mu: float) -> float:
    """``sup (sum_i w_{P_i})^-mu |v|`` over the nodes."""
    g = v.grid
    W = np.zeros((g.n, g.n))
    for P in cfg.points:
        W += _spike(pr, g, P, cfg.epsilon)
    a = np.abs(v.values)
    nz = a > 0
    if not nz.any():
        return 0.0
    with np.errstate(divide="ignore", over="ignore"):
        return float(np.max(a[nz] * W[nz] ** (-mu)))


@dataclass(frozen=True)
class MomentReport:
    lhs: np.ndarray
    rhs: np.ndarray
    deviation: float  # |lhs - rhs| / eps^(N + beta)


def moment_check(cfg: SpikeConfig, pr: Profile, pot: SaddlePotential, params: LSParameters,
                 g: Grid, i: int = 0, rc: ReducedConstants | None = None) -> MomentReport:
    """Grid value of ``int V chi^2 w_{P_i} grad w_{P_i}`` against ``-eps^N M P_i c2``.

    The gradient is the central difference of the grid field, so the
    deviation carries an O(h^2) discretisation part.
    """
    _check_resolved(params, g)
    rc = rc or compute_constants(pr)
    eps = cfg.epsilon
    X, Y = g.mesh()
    chi = cutoff(np.hypot(X, Y), params.R0, params.R1)
    w = _spike(pr, g, cfg.points[i], eps)
    gx = np.zeros_like(w)
    gy = np.zeros_like(w)
    gx[1:-1, :] = (w[2:, :] - w[:-2, :]) / (2 * g.h)
    gy[:, 1:-1] = (w[:, 2:] - w[:, :-2]) / (2 * g.h)
    weight = _V_grid(pot, g) * chi ** 2 * w * g.h ** 2
    lhs = np.array([np.sum(weight * gx), np.sum(weight * gy)])
    rhs = -eps ** 2 * pot.grad(cfg.points[i]) * rc.c2
    dev = float(np.linalg.norm(lhs - rhs)) / eps ** (2 + cfg.beta)
    return MomentReport(lhs, rhs, dev)


def canonical_pair(eps: float, beta: float, pr: Profile, theta: float = 0.5, kappa: float = 0.0,
                   signs=(1.0, -1.0), axis: int = 0) -> SpikeConfig:
    """Two spikes on coordinate axis ``axis`` at separation ``eps * rho``
    with ``w(rho) = theta eps^(2 beta)``, centred at ``kappa eps^beta``."""
    from scipy.optimize import brentq

    target = theta * eps ** (2 * beta)
    if not target < pr.w0:
        raise ValidationError("theta eps^(2 beta) must be below w(0)")
    rho = brentq(lambda s: eval_w(pr, s) - target, 0.0, 200.0, xtol=1e-14)
    e = np.eye(2)[axis]
    c = kappa * eps ** beta
    pts = [(c - 0.5 * rho * eps) * e, (c + 0.5 * rho * eps) * e]
    return SpikeConfig(eps, pts, signs, beta)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<qd")


def save_field_binary(v: GridField, path) -> Path:
    """Header ``(n: int64, L: float64)`` then ``n*n`` little-endian doubles, row-major."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(_HEADER.pack(v.grid.n, v.grid.L))
        fh.write(np.ascontiguousarray(v.values, dtype="<f8").tobytes())
    tmp.replace(path)
    return path


def load_field_binary(path) -> GridField:
    data = Path(path).read_bytes()
    n, L = _HEADER.unpack_from(data)
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if vals.size != n * n:
        raise ValidationError("binary field size does not match its header")
    return GridField(vals.reshape(n, n).copy(), Grid(L, n))


def save_field_csv(v: GridField, path) -> Path:
    path = Path(path)
    X, Y = v.grid.mesh()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        fh.write("x,y,value\n")
        for x, y, val in zip(X.ravel().tolist(), Y.ravel().tolist(), v.values.ravel().tolist()):
            fh.write(f"{x!r},{y!r},{val!r}\n")
    tmp.replace(path)
    return path


def write_jsonl(entries, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in entries), encoding="utf-8")
    tmp.replace(path)
    return path
