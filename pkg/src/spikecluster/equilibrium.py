"""Balance system on unit-distance configurations.

The limiting first-order conditions for a cluster whose rescaled spike
positions sit at mutual distance at least one read

    sum_j a_ij (Q_i - Q_j) / |Q_i - Q_j| = 0     for every i,

with symmetric weights ``a_ij`` supported on the unit-distance contacts.
This module assembles that linear map, computes its kernel, and searches
random sticky configurations for contact graphs carrying a nonzero kernel.
A search can only report the absence of counterexamples, never prove it.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import TooClose, ValidationError

__all__ = [
    "UnitConfig",
    "BalanceKernel",
    "contact_graph",
    "balance_matrix",
    "balance_sums",
    "balance_kernel",
    "dilation_value",
    "canonical_form",
    "hexagon_center",
    "sign_constrained_kernel",
    "EquilibriumReport",
    "search_equilibria",
]

KERNEL_RCOND = 1e-8


@dataclass(frozen=True, eq=False)
class UnitConfig:
    """Points with pairwise distance ``>= 1 - tol`` and their unit contacts."""

    points: np.ndarray
    edges: tuple
    tol: float = 1e-6

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ell(self) -> int:
        return self.points.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class BalanceKernel:
    """Orthonormal kernel basis, one row per vector over the edge list.

    ``singular_values`` are those of the balance map.  For the
    sign-constrained variant ``angles`` lists the (mu1, mu2) directions, in
    radians, at which an admissible nonzero element was found.
    """

    basis: np.ndarray
    edges: tuple
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mode: str = "free"
    angles: tuple = ()

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def nontrivial(self) -> bool:
        return self.dim > 0


def contact_graph(points, tol: float = 1e-6) -> UnitConfig:
    """Contact edges of ``points``: pairs at distance 1 within ``tol``.

    Raises
    ------
    TooClose
        If some pair is closer than ``1 - tol``.
    """
    P = np.array(points, dtype=float)
    if P.ndim != 2 or P.shape[1] not in (2, 3):
        raise ValidationError("points must be an (ell, d) array with d in {2, 3}")
    i, j = np.triu_indices(P.shape[0], 1)
    d = np.linalg.norm(P[i] - P[j], axis=1)
    if np.any(d < 1.0 - tol):
        k = int(np.argmin(d))
        raise TooClose(f"points {i[k]} and {j[k]} are at distance {d[k]:.3g} < 1 - tol")
    on = np.abs(d - 1.0) <= tol
    edges = tuple((int(a), int(b)) for a, b in zip(i[on], j[on]))
    P.setflags(write=False)
    return UnitConfig(P, edges, float(tol))


def balance_matrix(points, edges) -> np.ndarray:
    """The (d*ell) x |E| map taking edge weights to stacked balance sums."""
    P = np.asarray(points, dtype=float)
    ell, d = P.shape
    B = np.zeros((ell * d, len(edges)))
    for k, (i, j) in enumerate(edges):
        u = P[i] - P[j]
        u = u / np.linalg.norm(u)
        B[i * d:(i + 1) * d, k] += u
        B[j * d:(j + 1) * d, k] -= u
    return B


def balance_sums(points, edges, a) -> np.ndarray:
    """``sum_j a_ij (Q_i - Q_j)/|Q_i - Q_j|`` for each i, shape (ell, d)."""
    P = np.asarray(points, dtype=float)
    return (balance_matrix(P, edges) @ np.asarray(a, dtype=float)).reshape(P.shape)


def balance_kernel(uc: UnitConfig) -> BalanceKernel:
    """Numerical kernel of the balance map.

    Singular values below ``1e-8 * sigma_max`` count as zero.
    """
    if uc.n_edges == 0:
        return BalanceKernel(np.zeros((0, 0)), uc.edges)
    B = balance_matrix(uc.points, uc.edges)
    s = linalg.svdvals(B)
    ker = linalg.null_space(B, rcond=KERNEL_RCOND)
    return BalanceKernel(ker.T.copy(), uc.edges, s)


def dilation_value(uc: UnitConfig, a):
    """``sum_{i<j} a_ij |Q_i - Q_j|`` and the contraction ``sum_i balance_i . Q_i``.

    The two agree for every weight vector: moving the points radially
    rescales all distances at once.

    Returns
    -------
    value, contraction : float
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (uc.n_edges,):
        raise ValidationError(f"expected {uc.n_edges} edge weights, got shape {a.shape}")
    if uc.n_edges == 0:
        return 0.0, 0.0
    e = np.array(uc.edges)
    lengths = np.linalg.norm(uc.points[e[:, 0]] - uc.points[e[:, 1]], axis=1)
    value = float(a @ lengths)
    contraction = float(np.sum(balance_sums(uc.points, uc.edges, a) * uc.points))
    return value, contraction


# -- canonical labels ---------------------------------------------------------

_PERMS: dict = {}


def _perms(n):
    if n not in _PERMS:
        _PERMS[n] = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    return _PERMS[n]


def canonical_form(ell: int, edges) -> str:
    """Relabeling-invariant identifier of a graph on ``ell`` vertices.

    Sorted degree sequence plus the smallest upper-triangle bit code over
    all vertex relabelings; exhaustive, so intended for ``ell <= 8``.
    """
    A = np.zeros((ell, ell), dtype=np.int64)
    for i, j in edges:
        A[i, j] = A[j, i] = 1
    deg = "".join(str(x) for x in sorted(A.sum(axis=0).tolist(), reverse=True))
    if ell < 2:
        return f"n{ell}-d{deg}-0"
    iu, ju = np.triu_indices(ell, 1)
    weights = 1 << np.arange(iu.size, dtype=np.int64)
    perms = _perms(ell)
    permuted = A[perms[:, iu], perms[:, ju]]
    code = int((permuted @ weights).min())
    return f"n{ell}-d{deg}-{code:x}"


def hexagon_center(dim: int = 2) -> np.ndarray:
    """Regular unit hexagon and its centre, the centre listed first."""
    t = np.arange(6) * np.pi / 3
    P = np.vstack([[0.0, 0.0], np.column_stack([np.cos(t), np.sin(t)])])
    if dim == 3:
        P = np.column_stack([P, np.zeros(7)])
    return P


# -- sign-constrained kernel --------------------------------------------------

def _admissible_element(B, s):
    """Find ``b >= 0`` with ``B (s * b) = 0`` and unit mass on ``s != 0``."""
    live = np.abs(s) > 1e-12
    if not np.any(live):
        return None
    Bs = B[:, live] * s[live]
    m = int(live.sum())
    A_eq = np.vstack([Bs, np.ones((1, m))])
    b_eq = np.concatenate([np.zeros(B.shape[0]), [1.0]])
    res = optimize.linprog(np.zeros(m), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    a = np.zeros(s.size)
    a[live] = s[live] * res.x
    scale = np.linalg.norm(a)
    if scale == 0 or np.abs(B @ a).max() > 1e-8 * scale:
        return None
    return a / scale


def sign_constrained_kernel(uc: UnitConfig, tau, mode: str = "cone", n_angles: int = 72) -> BalanceKernel:
    """Kernel elements of the form ``a_ij = (mu2 - mu1 tau_i tau_j) b_ij``, ``b >= 0``.

    ``(mu1, mu2) = (cos t, sin t)`` sweeps ``n_angles`` equally spaced
    angles together with the diagonal directions; each sweep point is a
    linear feasibility problem.  ``mode="free"`` drops the sign constraint
    and defers to :func:`balance_kernel`.
    """
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (uc.ell,) or not np.all(np.abs(tau) == 1):
        raise ValidationError("tau must hold one sign per point")
    if mode == "free":
        return balance_kernel(uc)
    if mode != "cone":
        raise ValidationError(f"unknown mode {mode!r}; expected 'cone' or 'free'")
    if uc.n_edges == 0:
        return BalanceKernel(np.zeros((0, 0)), uc.edges, mode="cone")
    B = balance_matrix(uc.points, uc.edges)
    e = np.array(uc.edges)
    tt = tau[e[:, 0]] * tau[e[:, 1]]
    angles = np.unique(np.round(np.concatenate([
        np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False),
        np.array([1, 3, 5, 7]) * np.pi / 4]), 14))
    found, hits = [], []
    for t in angles:
        a = _admissible_element(B, np.sin(t) - np.cos(t) * tt)
        if a is not None:
            found.append(a)
            hits.append(float(t))
    if found:
        F = np.array(found)
        u, s, vt = np.linalg.svd(F, full_matrices=False)
        basis = vt[s > KERNEL_RCOND * s[0]]
    else:
        basis = np.zeros((0, uc.n_edges))
    return BalanceKernel(basis, uc.edges, linalg.svdvals(B), "cone", tuple(hits))


# -- randomized search --------------------------------------------------------

@dataclass
class EquilibriumReport:
    """Distinct contact graphs met by a search and their kernel dimensions."""

    ell: int
    dim: int
    trials: int
    seed: int
    graphs: dict
    rejected: int = 0

    @property
    def nontrivial(self) -> list:
        return [g for g in self.graphs.values() if g["kernel_dim"] > 0]

    def verdict(self) -> str:
        hits = self.nontrivial
        if not hits:
            return (f"ell={self.ell}: no nontrivial kernel found "
                    f"({len(self.graphs)} contact graphs, {self.trials} trials)")
        tag = "hexagon+center" if any(g.get("source") == "hexagon+center" for g in hits) else "random"
        return f"ell={self.ell}: nontrivial kernel found ({tag})"

    def as_dict(self) -> dict:
        return {
            "ell": self.ell, "dim": self.dim, "trials": self.trials, "seed": self.seed,
            "rejected": self.rejected, "verdict": self.verdict(),
            "graphs": [self.graphs[k] for k in sorted(self.graphs)],
        }


def _sticky_energy(x, n_pts, dim, pairs, stiff, width, pull):
    """Hard-core penalty, a narrow attractive well at distance 1, and a pull
    towards each cluster centroid; summed over a batch of independent trials."""
    X = x.reshape(-1, n_pts, dim)
    i, j = pairs
    D = X[:, i] - X[:, j]
    d = np.sqrt(np.sum(D * D, axis=-1)) + 1e-300
    over = np.maximum(1.0 - d, 0.0)
    g = np.exp(-0.5 * ((d - 1.0) / width) ** 2)
    C = X - X.mean(axis=1, keepdims=True)
    E = stiff * np.sum(over ** 2) - np.sum(g) + pull * np.sum(C * C)
    dEd = -2.0 * stiff * over + g * (d - 1.0) / width ** 2
    F = (dEd / d)[..., None] * D
    inc = np.zeros((n_pts, i.size))
    inc[i, np.arange(i.size)] = 1.0
    inc[j, np.arange(i.size)] = -1.0
    G = np.einsum("pk,nkd->npd", inc, F) + 2.0 * pull * C
    return E, G.ravel()


def _relax(X, pairs, stiff=200.0, width=0.08, pull=0.05):
    n, ell, dim = X.shape
    x = X.ravel()
    for k in (pull, 0.0):
        res = optimize.minimize(_sticky_energy, x, args=(ell, dim, pairs, stiff, width, k), jac=True,
                                method="L-BFGS-B", options={"maxiter": 1500, "gtol": 1e-7})
        x = res.x
    return x.reshape(n, ell, dim)


def _polish(P, capture=0.03, iters=30):
    """Gauss-Newton projection of near contacts onto exact unit distance."""
    P = P - P.mean(axis=0)
    i, j = np.triu_indices(P.shape[0], 1)
    d = np.linalg.norm(P[i] - P[j], axis=1)
    near = np.abs(d - 1.0) < capture
    if not near.any():
        return P
    ii, jj = i[near], j[near]
    ell, dim = P.shape
    for _ in range(iters):
        D = P[ii] - P[jj]
        dd = np.linalg.norm(D, axis=1)
        r = dd - 1.0
        if np.abs(r).max() < 1e-13:
            break
        J = np.zeros((r.size, ell * dim))
        U = D / dd[:, None]
        for k in range(r.size):
            J[k, ii[k] * dim:(ii[k] + 1) * dim] = U[k]
            J[k, jj[k] * dim:(jj[k] + 1) * dim] = -U[k]
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        P = P + step.reshape(ell, dim)
    return P


def _record(graphs, uc, source):
    key = canonical_form(uc.ell, uc.edges)
    known = graphs.get(key)
    if known is not None and known["kernel_dim"] > 0:
        known["count"] += 1
        return
    bk = balance_kernel(uc)
    entry = {
        "graph_id": key,
        "points": uc.points.tolist(),
        "edges": [list(e) for e in uc.edges],
        "kernel_dim": bk.dim,
        "kernel_basis": bk.basis.tolist(),
        "source": source,
        "count": 1 + (known["count"] if known else 0),
    }
    if known is None or bk.dim > known["kernel_dim"]:
        graphs[key] = entry
    else:
        known["count"] += 1


def _run_chunk(ell, dim, n, seed_seq, tol):
    rng = np.random.default_rng(seed_seq)
    pairs = np.triu_indices(ell, 1)
    side = 1.5 * ell ** (1.0 / dim)
    X = _relax(rng.uniform(0.0, side, size=(n, ell, dim)), pairs)
    out, rejected = [], 0
    for P in X:
        try:
            out.append(contact_graph(_polish(P), tol))
        except TooClose:
            rejected += 1
    return out, rejected


def search_equilibria(ell: int, dim: int = 2, trials: int = 10_000, seed: int = 0,
                      tol: float = 1e-6, seeds=None, chunk: int = 500,
                      workers: int = 1) -> EquilibriumReport:
    """Multi-start search for contact graphs with a nonzero balance kernel.

    Each trial relaxes random points under a sticky pair potential that
    keeps distances at least one and rewards unit contacts, projects near
    contacts onto exact unit length, and reads off the contact graph.
    Every distinct graph (up to relabeling) gets its kernel computed.
    ``seeds`` adds named starting configurations; for ``ell = 7`` the
    hexagon with centre is always included.  Chunks draw from independent
    child streams of ``seed``, so the report does not depend on
    ``workers``.
    """
    if not 2 <= ell <= 7:
        raise ValidationError("ell must lie in [2, 7]")
    if dim not in (2, 3):
        raise ValidationError("dim must be 2 or 3")
    if trials < 0:
        raise ValidationError("trials must be non-negative")
    named = dict(seeds or {})
    if ell == 7:
        named.setdefault("hexagon+center", hexagon_center(dim))
    sizes = [min(chunk, trials - k) for k in range(0, trials, chunk)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(ell, dim, n, s, tol) for n, s in zip(sizes, streams)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda a: _run_chunk(*a), jobs))
    else:
        results = [_run_chunk(*a) for a in jobs]
    graphs, rejected = {}, 0
    for name, P in named.items():
        _record(graphs, contact_graph(P, tol), name)
    for ucs, rej in results:
        rejected += rej
        for uc in ucs:
            _record(graphs, uc, "random")
    return EquilibriumReport(ell, dim, trials, seed, graphs, rejected)
