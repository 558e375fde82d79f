"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Tolerances are the stated ones.  Run with ``pytest tests/test_acceptance.py``;
the summary section at the end of the run lists every criterion.
"""
import json
import math
import warnings

import numpy as np
import pytest

from spikecluster.cli import main
from spikecluster.equilibrium import (
    balance_sums,
    contact_graph,
    hexagon_center,
    search_equilibria,
)
from spikecluster.errors import NotAdmissible
from spikecluster.lspde import (
    assemble_ansatz,
    canonical_pair,
    expansion_defect,
    extract_peaks,
    newton_solve,
    projected_solve,
    reduced_energy_numeric,
    setup_grid,
)
from spikecluster.potential import SpikeConfig, in_gamma
from spikecluster.profile import (
    Nonlinearity,
    compute_constants,
    eval_w,
    eval_w_prime,
    get_profile,
    interaction_xi,
    interaction_xi_prime,
)
from spikecluster.reduced import (
    MODES,
    family_for,
    find_critical_point,
    generate,
    maxmin_report,
    r_eps,
    reduced_energy,
    reduced_gradient,
)

LADDER = (0.1, 0.07, 0.05, 0.035)
BETA = 0.5


def _decreasing(xs):
    return all(a > b for a, b in zip(xs, xs[1:]))


def _fmt(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


# -- 1 ---------------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_criterion_1_closed_form_profiles(cache_dir, criterion):
    pr3 = get_profile(1, 3.0, 1e-9, cache_dir=cache_dir)
    rc3 = compute_constants(pr3)
    pr4 = get_profile(1, 4.0, 1e-9, cache_dir=cache_dir)
    criterion["detail"] = (f"p=3: w0={pr3.w0:.8g} A={pr3.A:.6g} c2={rc3.c2:.8g} c3={rc3.c3:.8g}; "
                           f"p=4: w0={pr4.w0:.8g} A={pr4.A:.6g}")
    assert pr3.w0 == pytest.approx(1.5, rel=1e-4)
    assert pr3.A == pytest.approx(6.0, rel=1e-2)
    assert rc3.c2 == pytest.approx(3.0, rel=1e-4)
    assert rc3.c3 == pytest.approx(12.0, rel=1e-4)
    assert pr4.w0 == pytest.approx(math.sqrt(2), rel=1e-4)
    assert pr4.A == pytest.approx(2 * math.sqrt(2), rel=1e-2)


# -- 2 ---------------------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_criterion_2_interaction_asymptotics(pr2, rc2, criterion):
    rhos = (8.0, 10.0, 12.0, 15.0)
    dv = [abs(interaction_xi(pr2, r) / (rc2.c3 * float(eval_w(pr2, r))) - 1) for r in rhos]
    dd = [abs(interaction_xi_prime(pr2, r) / (rc2.c3 * float(eval_w_prime(pr2, r))) - 1) for r in rhos]
    criterion["detail"] = f"value dev {_fmt(dv)}; derivative dev {_fmt(dd)}"
    assert dv[-1] < 0.05 and dd[-1] < 0.05
    assert _decreasing(dv) and _decreasing(dd)


# -- 3 ---------------------------------------------------------------------------------

def _fd_gradient(cfg, pr, pot, rc, mode):
    x = cfg.points.ravel()
    h = 1e-6 * cfg.epsilon
    g = np.empty_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        Jp = reduced_energy(cfg.with_points(xp.reshape(cfg.points.shape)), pr, pot, rc, mode, check=False)
        Jm = reduced_energy(cfg.with_points(xm.reshape(cfg.points.shape)), pr, pot, rc, mode, check=False)
        g[k] = (Jp.value - Jm.value) / (2 * h)
    return g


@pytest.mark.criterion(3)
def test_criterion_3_gradient_fidelity(pr2, rc2, pot, kernel2, criterion):
    rng = np.random.default_rng(3)
    worst, count = 0.0, 0
    while count < 50:
        ell = int(rng.integers(2, 5))
        eps = float(rng.uniform(0.03, 0.1))
        P = rng.uniform(-0.7, 0.7, size=(ell, 2)) * eps ** BETA
        cfg = SpikeConfig(eps, P, rng.choice([-1.0, 1.0], ell), BETA)
        if not in_gamma(cfg, pr2, pot):
            continue
        count += 1
        for mode in MODES:
            g = reduced_gradient(cfg, pr2, pot, rc2, mode)
            fd = _fd_gradient(cfg, pr2, pot, rc2, mode)
            worst = max(worst, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
    criterion["detail"] = f"50 configs x {len(MODES)} modes, worst relative error {worst:.3g}"
    assert worst <= 1e-6


# -- 4 and 5: one ladder run -----------------------------------------------------------

@pytest.fixture(scope="module")
def ladder(pr2, rc2, pot, nl3, kernel2):
    rows = []
    for eps in LADDER:
        cfg = canonical_pair(eps, BETA, pr2)
        params, g = setup_grid(eps, BETA, pot, nl3, clearance=2.0)
        E = expansion_defect(cfg, pr2, pot, nl3, params, g, rc2)
        corr = projected_solve(cfg, pr2, pot, nl3, params, g, tol=1e-9)
        Jn = reduced_energy_numeric(cfg, pr2, pot, nl3, params, g, rc2, corr)
        Jf = reduced_energy(cfg, pr2, pot, rc2, "xi_exact", check=False).value
        rows.append({"eps": eps, "h": g.h, "n": g.n, "E": E / cfg.level,
                     "J": abs(Jn - Jf) / cfg.level, "orth": float(np.max(corr.orth_defects)),
                     "res": corr.projected_residual,
                     "phi": corr.phi.max_norm() / eps ** params.eta})
    return rows


@pytest.mark.criterion(4)
def test_criterion_4_expansion_order(ladder, criterion):
    E = [r["E"] for r in ladder]
    J = [r["J"] for r in ladder]
    criterion["detail"] = f"E/eps^2b {_fmt(E)}; |Jn-Jf|/eps^2b {_fmt(J)}; n_max={ladder[-1]['n']}"
    assert all(r["h"] <= r["eps"] / 8 for r in ladder) and ladder[-1]["n"] <= 1025
    assert _decreasing(E)
    assert _decreasing(J)


@pytest.mark.criterion(5)
def test_criterion_5_correction(ladder, criterion):
    phi = [r["phi"] for r in ladder]
    orth = max(r["orth"] for r in ladder)
    criterion["detail"] = f"|phi|/eps^eta {_fmt(phi)} (empirical C = {max(phi):.3g}); max orth defect {orth:.2g}"
    assert all(r["res"] <= 1e-9 for r in ladder)
    assert orth <= 1e-10
    assert phi[-1] <= 1.2 * phi[-2]


# -- 6 ---------------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_criterion_6_cluster_pipeline(pr2, rc2, pot, nl3, kernel2, criterion):
    eps = 0.05
    seeds = {
        "(+,+)": generate(family_for(2, 0, pot), np.zeros((2, 1)), None, eps, BETA),
        "(+,-)": generate(family_for(1, 1, pot), [0.0], [r_eps(eps)], eps, BETA),
    }
    params, g = setup_grid(eps, BETA, pot, nl3, clearance=2.0)
    notes, ok = [], True
    for name, seed in seeds.items():
        crit = find_critical_point(seed, pr2, pot, rc2).config
        P = crit.points
        sep = float(np.linalg.norm(P[0] - P[1]))
        geom = (np.max(np.linalg.norm(P, axis=1)) <= eps ** BETA
                and sep >= 2 * BETA ** 2 * eps * math.log(1 / eps))
        corr = projected_solve(crit, pr2, pot, nl3, params, g)
        log = []
        v = newton_solve(assemble_ansatz(crit, pr2, params, g) + corr.phi, pot, nl3, params,
                         tol=1e-9, max_iter=8, log=log)
        peaks = extract_peaks(v, pr2.w0)
        offs = []
        match = len(peaks) == 2
        for pk in peaks:
            i = int(np.argmin(np.linalg.norm(P - pk.position, axis=1)))
            offs.append(float(np.linalg.norm(P[i] - pk.position)))
            match &= pk.sign == crit.signs[i]
        good = geom and match and max(offs, default=math.inf) <= eps and len(log) <= 8
        ok &= bool(good)
        notes.append(f"{name}: sep={sep:.4g} steps={len(log)} peaks={len(peaks)} "
                     f"max offset={max(offs, default=math.nan):.3g}")
    criterion["detail"] = "; ".join(notes)
    assert ok


# -- 7 ---------------------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_criterion_7_maxmin_geometry(pr2, rc2, pot, kernel2, criterion):
    fam = family_for(1, 1, pot)
    devs = {eps: maxmin_report(fam, pr2, rc2, eps, beta=0.1, n_grid=41).K0_max_rel_dev
            for eps in LADDER}
    seq = [devs[e] for e in LADDER]
    criterion["detail"] = f"K0 max rel dev from c4 eps^2b/4 along ladder {_fmt(seq)}"
    assert devs[0.05] <= 0.30
    assert _decreasing(seq)


# -- 8 ---------------------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_criterion_8_equilibrium_obstruction(criterion):
    verdicts = {}
    for ell in range(2, 7):
        rep = search_equilibria(ell, dim=2, trials=10_000, seed=ell)
        verdicts[ell] = (len(rep.nontrivial), len(rep.graphs))
    hexrep = search_equilibria(7, dim=2, trials=0, seed=7)
    rng = np.random.default_rng(8)
    uc = contact_graph(hexagon_center())
    worst = 0.0
    for k in range(1000):
        if k % 2:
            P, edges = uc.points, uc.edges
        else:
            n = int(rng.integers(2, 8))
            P = rng.uniform(0, 4, size=(n, 2))
            i, j = np.triu_indices(n, 1)
            edges = tuple(zip(i.tolist(), j.tolist()))
        a = rng.normal(size=len(edges))
        e = np.array(edges)
        lengths = np.linalg.norm(P[e[:, 0]] - P[e[:, 1]], axis=1)
        lhs = float(np.sum(balance_sums(P, edges, a) * P))
        worst = max(worst, abs(lhs - a @ lengths) / (np.abs(a) @ lengths))
    criterion["detail"] = ("ell 2..6 (nontrivial, graphs): "
                           + ", ".join(f"{k}:{v}" for k, v in verdicts.items())
                           + f"; {hexrep.verdict()}; dilation worst rel {worst:.2g}")
    assert all(v[0] == 0 for v in verdicts.values())
    assert hexrep.verdict() == "ell=7: nontrivial kernel found (hexagon+center)"
    assert worst <= 1e-12


# -- 9 ---------------------------------------------------------------------------------

@pytest.mark.criterion(9)
def test_criterion_9_determinism(tmp_path, cache_dir, criterion):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"[run]\nout = '{tmp_path / 'a'}'\ncache_dir = '{cache_dir}'\nseed = 11\n"
                   "[ladder]\nepsilons = [0.1, 0.05]\n[lemma]\nells = [3, 7]\ntrials = 200\n")
    verbs = ("constants", "search", "lsreduce", "lemma-check")
    same = []
    for verb in verbs:
        assert main([verb, "--config", str(cfg)]) == 0
        man = tmp_path / "a" / f"manifest_{verb.replace('-', '_')}.json"
        assert main([verb, "--config", str(man), "--out", str(tmp_path / "b")]) == 0
        s1 = [s["scalars"] for s in json.loads(man.read_text())["stages"]]
        s2 = [s["scalars"] for s in json.loads((tmp_path / "b" / man.name).read_text())["stages"]]
        same.append(json.dumps(s1, sort_keys=True) == json.dumps(s2, sort_keys=True))
    criterion["detail"] = ", ".join(f"{v}: {'identical' if s else 'DIFFERENT'}" for v, s in zip(verbs, same))
    assert all(same)
