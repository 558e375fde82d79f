import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from frozen import N2, N2_MODE0_MIN_ABS, N3
from spikecluster.errors import CacheMiss, NoPlateau, ValidationError
from spikecluster.profile import (
    Nonlinearity,
    Profile,
    c3_from_interaction,
    compute_constants,
    decay_amplitude,
    domination_constant,
    eval_w,
    eval_w_prime,
    get_profile,
    interaction_xi,
    interaction_xi_prime,
    kernel_h1_norm,
    load_profile,
    ode_residual,
    pohozaev_defect,
    save_profile,
    solve_profile,
    verify_nondegeneracy,
)


# -- nonlinearity ---------------------------------------------------------------

@given(st.floats(2.05, 6.0), st.floats(-5.0, 5.0))
def test_nonlinearity_is_odd(p, t):
    nl = Nonlinearity(p)
    assert nl.f(-t) == -nl.f(t)


@given(st.floats(2.05, 6.0), st.floats(-3.0, 3.0).filter(lambda t: abs(t) > 1e-2))
def test_nonlinearity_derivatives(p, t):
    nl = Nonlinearity(p)
    h = 1e-6
    assert (nl.F(t + h) - nl.F(t - h)) / (2 * h) == pytest.approx(float(nl.f(t)), rel=1e-6, abs=1e-9)
    assert (nl.f(t + h) - nl.f(t - h)) / (2 * h) == pytest.approx(float(nl.fprime(t)), rel=1e-5, abs=1e-9)
    assert nl.fprime(t) >= 0


def test_nonlinearity_rejects_sublinear_exponent():
    with pytest.raises(ValidationError):
        Nonlinearity(2.0)


def test_sigma_is_holder_exponent():
    assert Nonlinearity(3.0).sigma == 1.0
    assert Nonlinearity(2.5).sigma == 0.5


# -- closed forms (N = 1) --------------------------------------------------------

def test_n1_p3_closed_form(pr1):
    assert pr1.w0 == pytest.approx(1.5, abs=1e-6)
    x = np.linspace(0.0, 15.0, 61)
    assert np.allclose(eval_w(pr1, x), 1.5 / np.cosh(x / 2) ** 2, rtol=1e-7, atol=1e-12)
    assert eval_w(pr1, 20.0) == pytest.approx(6 * math.exp(-20), rel=1e-3)
    assert decay_amplitude(pr1) == pytest.approx(6.0, rel=1e-2)


def test_n1_p4_closed_form():
    pr = solve_profile(1, Nonlinearity(4.0))
    assert pr.w0 == pytest.approx(math.sqrt(2), abs=1e-6)
    assert decay_amplitude(pr) == pytest.approx(2 * math.sqrt(2), rel=1e-2)
    rc = compute_constants(pr)
    assert rc.c2 == pytest.approx(2.0, rel=1e-6)  # 1/2 int 2 sech^2
    assert rc.c3 == pytest.approx(4 * math.sqrt(2), rel=1e-4)  # int 2 sqrt2 sech^3 e^x


def test_n1_p3_constants(pr1):
    rc = compute_constants(pr1)
    assert rc.c2 == pytest.approx(3.0, rel=1e-6)
    assert rc.c3 == pytest.approx(12.0, rel=1e-4)
    assert rc.c1_unit == pytest.approx(1.2, rel=1e-6)  # (1/2 - 1/3) int w^3
    assert rc.c4 == min(rc.c2, rc.c3)
    assert rc.c1(3) == pytest.approx(3 * rc.c1_unit)


# -- regression values -----------------------------------------------------------

def test_n2_regression(pr2, rc2):
    assert pr2.w0 == pytest.approx(N2["w0"], rel=1e-10)
    assert pr2.A == pytest.approx(N2["A"], rel=1e-6)
    assert decay_amplitude(pr2) == pytest.approx(N2["A"], rel=1e-6)
    assert rc2.c1_unit == pytest.approx(N2["c1_unit"], rel=1e-9)
    assert rc2.c2 == pytest.approx(N2["c2"], rel=1e-9)
    assert rc2.c3 == pytest.approx(N2["c3"], rel=1e-9)


def test_n3_regression():
    pr = solve_profile(3)
    rc = compute_constants(pr)
    assert pr.w0 == pytest.approx(N3["w0"], rel=1e-10)
    assert pr.A == pytest.approx(N3["A"], rel=1e-6)
    assert rc.c1_unit == pytest.approx(N3["c1_unit"], rel=1e-9)
    assert rc.c2 == pytest.approx(N3["c2"], rel=1e-9)
    assert rc.c3 == pytest.approx(N3["c3"], rel=1e-9)


# -- profile invariants ------------------------------------------------------------

@pytest.mark.parametrize("which", ["pr1", "pr2"])
def test_profile_invariants(which, request):
    pr = request.getfixturevalue(which)
    assert np.all(np.diff(pr.w) < 0)
    assert np.all(pr.w > 0)
    assert np.all(pr.wp[1:] < 0)
    assert pr.wp[0] == 0.0
    assert eval_w_prime(pr, 0.0) == 0.0
    assert np.max(np.abs(ode_residual(pr))) <= pr.tol * pr.w0
    assert pr.w[-1] < 1e-8 <= pr.w[-2]


@pytest.mark.parametrize("which", ["pr1", "pr2"])
def test_tail_continuity(which, request):
    pr = request.getfixturevalue(which)
    below = eval_w(pr, pr.r_star * (1 - 1e-13))
    above = eval_w(pr, pr.r_star * (1 + 1e-13))
    assert abs(below - above) <= 1e-6 * eval_w(pr, pr.r_star)


@pytest.mark.parametrize("which", ["pr1", "pr2"])
def test_derivative_consistency(which, request):
    pr = request.getfixturevalue(which)
    h = 1e-5
    r = np.linspace(0.1, pr.r_star - h, 400)  # keep the stencil on the table side of r_star
    fd = (eval_w(pr, r + h) - eval_w(pr, r - h)) / (2 * h)
    assert np.all(np.abs(fd - eval_w_prime(pr, r)) <= 1e-4 * np.abs(eval_w_prime(pr, r)))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 60.0), st.floats(1e-3, 5.0))
def test_eval_w_monotone(pr2, r, dr):
    assert eval_w(pr2, r + dr) < eval_w(pr2, r)
    assert eval_w(pr2, r) > 0


@pytest.mark.parametrize("which", ["pr1", "pr2"])
def test_pohozaev(which, request):
    assert pohozaev_defect(request.getfixturevalue(which)) < 1e-6


def test_kernel_h1_norm_two_ways(pr2):
    direct, via_kernel = kernel_h1_norm(pr2)
    assert direct == pytest.approx(via_kernel, rel=1e-8)


def test_no_plateau_on_truncated_table(pr2):
    k = int(np.searchsorted(pr2.r, 8.0))
    short = Profile(pr2.dim, pr2.nonlinearity, pr2.w0, pr2.r[:k], pr2.w[:k], pr2.wp[:k],
                    pr2.A, float(pr2.r[k - 1]), pr2.tol)
    with pytest.raises(NoPlateau):
        decay_amplitude(short)


@pytest.mark.parametrize("args", [(4, Nonlinearity(3.0)), (3, Nonlinearity(6.0))])
def test_solve_profile_rejects_bad_dimension(args):
    with pytest.raises(ValidationError):
        solve_profile(*args)


# -- interaction kernel ------------------------------------------------------------

def test_xi_ratio_limits(pr2, rc2):
    rho = 15.0
    assert abs(interaction_xi(pr2, rho) / (rc2.c3 * eval_w(pr2, rho)) - 1) < 0.05
    assert abs(interaction_xi_prime(pr2, rho) / (rc2.c3 * eval_w_prime(pr2, rho)) - 1) < 0.05


def test_xi_monotone(pr2):
    vals = [interaction_xi(pr2, r) for r in (10.0, 12.0, 14.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_xi_rejects_nonpositive_rho(pr2):
    with pytest.raises(ValidationError):
        interaction_xi(pr2, 0.0)


def test_xi_prime_matches_difference_quotient(pr2):
    rho, h = 6.0, 1e-4
    fd = (interaction_xi(pr2, rho + h) - interaction_xi(pr2, rho - h)) / (2 * h)
    assert fd == pytest.approx(interaction_xi_prime(pr2, rho), rel=1e-6)


def test_n1_xi_direct_quadrature(pr1):
    # 1D: xi(rho) = int w^2(x) w(x + rho) dx, checked against direct trapezoid quadrature
    x = np.linspace(-40, 40, 400001)
    w = lambda s: 1.5 / np.cosh(s / 2) ** 2
    ref = integrate.trapezoid(w(x) ** 2 * w(x + 3.0), x)
    assert interaction_xi(pr1, 3.0) == pytest.approx(ref, rel=1e-8)


def test_kernel_table_matches_quadrature(pr2, kernel2):
    for rho in (0.3, 2.7, 9.06, 18.2, 30.0):
        assert kernel2(rho) == pytest.approx(interaction_xi(pr2, rho), rel=1e-5)
        assert kernel2.derivative(rho) == pytest.approx(interaction_xi_prime(pr2, rho), rel=1e-4)


def test_c3_two_ways(pr2, rc2):
    assert c3_from_interaction(pr2) == pytest.approx(rc2.c3, rel=1e-3)


# -- nondegeneracy and domination ------------------------------------------------

def test_nondegeneracy(pr2):
    rep = verify_nondegeneracy(pr2)
    assert rep.ok
    assert rep.mode1_min_abs <= 1e-4
    assert rep.mode0_min_abs >= 0.1
    assert rep.mode0_min_abs == pytest.approx(N2_MODE0_MIN_ABS, rel=1e-5)
    assert rep.mode1_overlap >= 0.999


def test_domination_constant_stable(pr2):
    c30 = domination_constant(pr2, radius=30.0, rng=np.random.default_rng(1))
    c60 = domination_constant(pr2, radius=60.0, rng=np.random.default_rng(1))
    assert np.isfinite(c30) and np.isfinite(c60)
    # the bound is uniform: widening the sampling range does not make it grow
    assert c60 <= 2.0 * c30


# -- cache ---------------------------------------------------------------------------

def test_cache_roundtrip_bit_exact(pr2, tmp_path):
    path = save_profile(pr2, tmp_path / "p.csv")
    back = load_profile(path, tol=pr2.tol)
    assert back.w0 == pr2.w0 and back.A == pr2.A and back.r_star == pr2.r_star
    assert np.array_equal(back.r, pr2.r) and np.array_equal(back.w, pr2.w)
    assert np.array_equal(back.wp, pr2.wp)
    assert save_profile(back, tmp_path / "q.csv").read_bytes() == path.read_bytes()
    assert path.read_text().startswith("# spike-cluster profile v1")


def test_cache_only_miss(tmp_path):
    with pytest.raises(CacheMiss):
        get_profile(1, 3.0, 1e-9, cache_dir=tmp_path, cache_only=True)


def test_cache_hit_identical(pr1, cache_dir):
    again = get_profile(1, 3.0, 1e-9, cache_dir=cache_dir, cache_only=True)
    assert np.array_equal(again.w, pr1.w) and again.A == pr1.A
