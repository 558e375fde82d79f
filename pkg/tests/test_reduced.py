import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from spikecluster.errors import BadShape, EmptyFamily, LeftDomain, NoOppositePair, NotAdmissible, NotConverged
from spikecluster.potential import SpikeConfig, in_gamma, make_saddle
from spikecluster.profile import interaction_xi_prime
from spikecluster.reduced import (
    ConfigFamily,
    CriticalOptions,
    MODES,
    family_for,
    find_critical_point,
    generate,
    h_map,
    hessian,
    hessian_signature,
    maxmin_report,
    r_eps,
    reduced_energy,
    reduced_gradient,
)

pot3 = make_saddle([2.0, 1.0, -3.0])


def _energy(cfg, pr, pot, rc, mode):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotAdmissible)
        return reduced_energy(cfg, pr, pot, rc, mode)


# -- energy -----------------------------------------------------------------------

@pytest.mark.parametrize("mode", MODES)
def test_single_spike_at_origin(pr2, rc2, pot, mode):
    ev = reduced_energy(SpikeConfig(0.05, [[0.0, 0.0]], [1]), pr2, pot, rc2, mode)
    assert ev.value == 0.0
    assert np.array_equal(ev.gradient, np.zeros(2))


@pytest.mark.parametrize("mode", MODES)
def test_hand_evaluated_pair(pr2, rc2, pot, kernel2, mode):
    cfg = SpikeConfig(0.05, [[0.0, 0.15], [0.0, -0.15]], [1, 1], beta=0.5)
    ev = reduced_energy(cfg, pr2, pot, rc2, mode)
    k6 = kernel2(6.0) if mode == "xi_exact" else rc2.c3 * float(pr2(6.0))
    assert ev.value == pytest.approx(-rc2.c2 * 0.0225 - k6, rel=1e-13)
    assert ev.value == pytest.approx(ev.potential_term + ev.interaction_term, rel=1e-15)


def test_swap_and_sign_flip_symmetry(pr2, rc2, pot):
    P = np.array([[0.05, 0.11], [-0.08, -0.02], [0.1, -0.12]])
    s = np.array([1.0, -1.0, 1.0])
    base = _energy(SpikeConfig(0.05, P, s, 0.5), pr2, pot, rc2, "xi_exact")
    swapped = _energy(SpikeConfig(0.05, P[[2, 0, 1]], s[[2, 0, 1]], 0.5), pr2, pot, rc2, "xi_exact")
    flipped = _energy(SpikeConfig(0.05, P, -s, 0.5), pr2, pot, rc2, "xi_exact")
    assert swapped.value == pytest.approx(base.value, rel=1e-14)
    assert flipped.value == base.value


def test_interaction_translation_invariant(pr2, rc2, pot):
    P = np.array([[0.05, 0.11], [-0.08, -0.02]])
    a = _energy(SpikeConfig(0.05, P, [1, -1], 0.5), pr2, pot, rc2, "xi_exact")
    b = _energy(SpikeConfig(0.05, P + [0.3, -0.7], [1, -1], 0.5), pr2, pot, rc2, "xi_exact")
    assert a.interaction_term == pytest.approx(b.interaction_term, rel=1e-13)
    assert a.potential_term != pytest.approx(b.potential_term)


def test_not_admissible_warns(pr2, rc2, pot):
    cfg = SpikeConfig(0.05, [[0.0, 0.0], [0.01, 0.0]], [1, -1], beta=0.5)
    with pytest.warns(NotAdmissible):
        ev = reduced_energy(cfg, pr2, pot, rc2)
    assert np.isfinite(ev.value)


def _random_admissible(pr, pot, rng, ell, eps, beta=0.5):
    while True:
        P = rng.uniform(-0.7, 0.7, size=(ell, 2)) * eps ** beta
        cfg = SpikeConfig(eps, P, rng.choice([-1.0, 1.0], ell), beta)
        if in_gamma(cfg, pr, pot):
            return cfg


def fd_gradient(cfg, pr, pot, rc, mode):
    x = cfg.points.ravel()
    h = 1e-6 * cfg.epsilon
    g = np.empty_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        Jp = _energy(cfg.with_points(xp.reshape(cfg.points.shape)), pr, pot, rc, mode).value
        Jm = _energy(cfg.with_points(xm.reshape(cfg.points.shape)), pr, pot, rc, mode).value
        g[k] = (Jp - Jm) / (2 * h)
    return g


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(MODES), st.integers(2, 4))
def test_gradient_matches_differences(pr2, rc2, pot, kernel2, seed, mode, ell):
    rng = np.random.default_rng(seed)
    cfg = _random_admissible(pr2, pot, rng, ell, rng.uniform(0.03, 0.1))
    g = reduced_gradient(cfg, pr2, pot, rc2, mode)
    fd = fd_gradient(cfg, pr2, pot, rc2, mode)
    assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


def test_modes_agree_along_ladder(pr2, rc2, pot, kernel2):
    fam = family_for(1, 1, pot)
    beta = 0.5
    gaps = []
    for eps in (0.1, 0.07, 0.05, 0.035):
        cfg = generate(fam, [0.0], [r_eps(eps)], eps, beta)
        a = _energy(cfg, pr2, pot, rc2, "asymptotic").value
        b = _energy(cfg, pr2, pot, rc2, "xi_exact").value
        gaps.append(abs(a - b) / cfg.level)
    assert all(x > y for x, y in zip(gaps, gaps[1:]))


# -- families ---------------------------------------------------------------------

def test_chain_example(pot):
    cfg = generate(family_for(1, 1, pot), [0.0], [0.2], 0.05)
    assert np.allclose(cfg.points, [[0, 0], [0.2, 0]])
    assert np.array_equal(cfg.signs, [1, -1])


def test_star_example():
    fam = family_for(3, 1, pot3, "polygon_star")
    cfg = generate(fam, [0.1, -0.2], [0.3, 0.3, 0.3], 0.05)
    assert np.array_equal(cfg.signs, [-1, 1, 1, 1])
    assert np.allclose(cfg.points[0], [0.1, -0.2, 0.0])
    i, j = np.triu_indices(3, 1)
    outer = cfg.points[1:]
    assert np.allclose(np.linalg.norm(outer[i] - outer[j], axis=1), 0.3 * math.sqrt(3))


def test_cross_example():
    fam = family_for(4, 2, pot3, "cross")
    d = 0.2
    cfg = generate(fam, [0.0, 0.0], [d] * 5, 0.05)
    v, w = np.eye(3)[0], np.eye(3)[1]
    expect = np.array([0 * v, d * v, 2 * d * v, 3 * d * v, d * w, -d * w])
    assert np.allclose(cfg.points, expect)
    assert np.array_equal(cfg.signs, [-1, 1, -1, 1, 1, 1])


@pytest.mark.parametrize("h,k,kind,p", [
    (4, 3, None, "pot"), (3, 1, "linear_chain", "pot"), (3, 1, "polygon_star", "pot"),
    (4, 2, "cross", "pot"), (2, 2, "cross", "pot3"), (1, 0, "linear_chain", "pot"),
    (2, 1, "hexagon", "pot"),
])
def test_bad_shapes(pot, h, k, kind, p):
    with pytest.raises(BadShape):
        family_for(h, k, pot if p == "pot" else pot3, kind)


def _family_cases():
    return [
        (family_for(1, 1, make_saddle([1.0, -1.0])), 1),
        (family_for(2, 1, make_saddle([1.0, -1.0])), 1),
        (family_for(3, 3, make_saddle([1.0, -1.0])), 1),
        (family_for(4, 1, pot3, "polygon_star"), 2),
        (family_for(5, 1, pot3, "polygon_star"), 2),
        (family_for(4, 2, pot3, "cross"), 2),
    ]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(range(6)), st.integers(0, 2 ** 32 - 1))
def test_h_map_round_trip_and_separations(case, seed):
    fam, r_sig = _family_cases()[case]
    rng = np.random.default_rng(seed)
    a = rng.uniform(-0.3, 0.3, r_sig)
    r = rng.uniform(0.05, 0.5, fam.ell - 1)
    cfg = generate(fam, a, r, 0.05)
    a_back, r_back = h_map(cfg, fam.pot)
    assert np.allclose(a_back, a, atol=1e-14)
    assert np.allclose(r_back, r, rtol=1e-13)
    same = cfg.signs[:, None] == cfg.signs[None, :]
    D = np.linalg.norm(cfg.points[:, None] - cfg.points[None], axis=-1)
    iu = np.triu_indices(fam.ell, 1)
    same_d = D[iu][same[iu]]
    factor = {"linear_chain": 2.0, "cross": math.sqrt(2),
              "polygon_star": math.sqrt(2 - 2 * math.cos(2 * math.pi / fam.h))}[fam.kind]
    rel = r if fam.kind != "cross" else r
    assert np.all(same_d >= factor * rel.min() * (1 - 1e-12))


def test_positive_family_h_map(pot):
    fam = family_for(3, 0, pot)
    a = np.array([[0.01], [-0.02], [0.03]])
    cfg = generate(fam, a, None, 0.05)
    a_back, r_back = h_map(cfg, pot)
    assert np.allclose(a_back, a) and r_back.size == 0
    assert np.allclose(np.diff(cfg.points[:, 1]), r_eps(0.05))


def test_no_opposite_pair(pot):
    cfg = SpikeConfig(0.05, [[0, 0], [0.1, 0], [0.2, 0]], [1, 1, -1])
    with pytest.raises(NoOppositePair):
        h_map(cfg, pot)


# -- critical points ---------------------------------------------------------------

def _scalar_oracle(pr, rc, eps):
    """Separation d with c2 d / 2 = -xi'(d / eps) / eps (symmetric pair, direct quadrature)."""
    g = lambda d: rc.c2 * d / 2 + interaction_xi_prime(pr, d / eps) / eps
    return brentq(g, 2 * eps, 10 * eps, xtol=1e-14)


@pytest.mark.parametrize("signs,axis", [((1, -1), 0), ((1, 1), 1)])
def test_critical_pair_against_scalar_oracle(pr2, rc2, pot, kernel2, signs, axis):
    eps, beta = 0.05, 0.5
    e = np.eye(2)[axis]
    d0 = r_eps(eps)
    seed = SpikeConfig(eps, [-d0 / 2 * e, d0 / 2 * e], signs, beta)
    res = find_critical_point(seed, pr2, pot, rc2)
    pts = res.config.points
    d = np.linalg.norm(pts[1] - pts[0])
    assert d == pytest.approx(_scalar_oracle(pr2, rc2, eps), rel=1e-5)
    assert np.allclose(pts[:, 1 - axis], 0.0, atol=1e-10)
    assert np.allclose(pts[0], -pts[1], atol=1e-10)
    assert 2 * beta ** 2 * eps * math.log(1 / eps) <= d <= 4 * eps * math.log(1 / eps)
    assert sum(res.signature.values()) == 4
    assert res.grad_norm <= 1e-9 and res.in_gamma


def test_critical_single_spike(pr2, rc2, pot):
    res = find_critical_point(SpikeConfig(0.05, [[0.0, 0.0]], [1], 0.5), pr2, pot, rc2)
    assert np.array_equal(res.config.points, [[0.0, 0.0]]) and res.iterations == 0


def test_critical_leaves_domain_at_large_beta(pr2, rc2, pot):
    d0 = r_eps(0.05)
    seed = SpikeConfig(0.05, [[-d0 / 2, 0], [d0 / 2, 0]], [1, -1], beta=0.9)
    with pytest.raises(LeftDomain):
        find_critical_point(seed, pr2, pot, rc2)


def test_critical_not_converged(pr2, rc2, pot):
    seed = SpikeConfig(0.05, [[-0.01, 0.02], [0.3, 0.0]], [1, -1], beta=0.5)
    with pytest.raises(NotConverged):
        find_critical_point(seed, pr2, pot, rc2, CriticalOptions(max_iter=2))


def test_hessian_signature_counts(pr2, rc2, pot):
    cfg = SpikeConfig(0.05, [[0.02, 0.01], [-0.1, 0.15], [0.12, -0.1]], [1, -1, 1], 0.5)
    eigs, sig = hessian_signature(hessian(cfg, pr2, pot, rc2))
    assert sum(sig.values()) == 6 and len(eigs) == 6
    H = hessian(cfg, pr2, pot, rc2)
    assert np.allclose(H, H.T, rtol=1e-6, atol=1e-6 * np.abs(H).max())


# -- max-min -----------------------------------------------------------------------

def test_maxmin_report_structure(pr2, rc2, pot, kernel2):
    fam = family_for(1, 1, pot)
    rep = maxmin_report(fam, pr2, rc2, 0.05, beta=0.1, n_grid=31)
    assert rep.level == pytest.approx(0.25 * rc2.c4 * 0.05 ** 0.2)
    assert rep.contains_r_eps
    assert rep.n_K > 0 and rep.n_K0 > 0
    assert rep.samples.shape == (rep.n_K, fam.param_dim + 2)
    assert rep.boundary.shape == (rep.n_K0, fam.param_dim + 1)
    assert rep.J_min_K <= rep.K0_min <= rep.K0_max
    d = rep.as_dict()
    assert set(d) >= {"K0_max_rel_dev", "level", "contains_r_eps"}


def test_maxmin_empty_family(pr2, rc2, pot, kernel2):
    with pytest.raises(EmptyFamily):
        maxmin_report(family_for(1, 1, pot), pr2, rc2, 0.1, beta=0.3, n_grid=21)


def test_maxmin_positive_family(pr2, rc2, pot, kernel2):
    rep = maxmin_report(family_for(2, 0, pot), pr2, rc2, 0.05, beta=0.1, n_boundary=100)
    assert rep.n_K0 == 100 and np.isfinite(rep.K0_max_rel_dev)
