import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import simpson

from dipolar_gs import wp_oracle as wp
from dipolar_gs.params import ModelParams, derive_geometry

# Shooting values, cross-checked against solve_bvp collocation (agreement ~5e-13).
W0 = {2.5: 3.274227236700468, 3.0: 3.1437622158319245, 3.3: 3.0965555081302503, 4.0: 3.0669962411467333}
C3 = 0.5590819120314124
C4 = 0.4492570155012492
MASS_W3 = 8.583510322628142

# Central value of the cubic NLS ground state -Delta Q + Q = Q^3 in 3D (literature value)
Q0_CUBIC = 4.3373877


@pytest.mark.parametrize("p", sorted(W0))
def test_central_height_frozen(p):
    assert wp.ground_profile(p).w0 == pytest.approx(W0[p], rel=1e-10)


def test_p4_profile_is_rescaled_cubic_soliton():
    # W_4(x) = Q(x / sqrt 3) / sqrt 2
    assert wp.ground_profile(4.0).w0 * math.sqrt(2.0) == pytest.approx(Q0_CUBIC, abs=2e-7)


@pytest.mark.parametrize("p", [2.5, 3.0, 3.3])
def test_shooting_matches_collocation(p):
    shot = wp.ground_profile(p)
    coll = wp.solve_wp_collocation(p)
    assert coll.w0 == pytest.approx(shot.w0, rel=1e-9)
    ns, nc = wp.radial_norms(shot, p), wp.radial_norms(coll, p)
    assert nc["mass"] == pytest.approx(ns["mass"], rel=1e-9)


@pytest.mark.parametrize("p", [2.2, 3.0, 3.3])
def test_profile_contract(p):
    prof = wp.ground_profile(p)
    assert wp.ode_residual(prof) < 1e-6
    assert np.all(prof.w > 0)
    assert np.all(np.diff(prof.w) < 0)
    assert prof.evaluate(np.array([2 * prof.r_max]))[0] < 1e-10 * prof.w0


def test_gn_constants_frozen():
    assert wp.gn_constant_for(3.0) == pytest.approx(C3, rel=1e-10)
    assert wp.gn_constant_for(4.0) == pytest.approx(C4, rel=1e-10)


@pytest.mark.parametrize("p", [2.5, 3.0, 3.3])
def test_mass_of_wp_from_gn_constant(p):
    # |W_p|_2^2 = (p / (2 C_p^p))^{2/(p-2)}
    prof = wp.ground_profile(p)
    C = wp.gn_constant(prof)
    mass = wp.radial_norms(prof, p)["mass"]
    assert mass**2 == pytest.approx((p / (2 * C**p)) ** (2 / (p - 2)), rel=1e-10)


@pytest.mark.parametrize("p", [2.5, 3.0, 3.3])
def test_pohozaev_of_wp(p):
    # for -Delta W + a W = b W^{p-1}: |grad W|^2 = delta b |W|_p^p, and b delta = 2/p
    n = wp.radial_norms(wp.ground_profile(p), p)
    assert n["grad"] ** 2 == pytest.approx(2.0 / p * n["lpp"], rel=1e-7)


def test_w3_mass_frozen():
    assert wp.radial_norms(wp.ground_profile(3.0))["mass"] == pytest.approx(MASS_W3, rel=1e-10)


def test_shooting_bracket_is_unique():
    lo, hi = wp.shoot_height(3.0, r_max=40.0)
    lo2, hi2 = wp.shoot_height(3.0, r_max=60.0)
    assert hi - lo < 1e-10
    assert max(hi, hi2) - min(lo, lo2) < 1e-10


def _gaussian_mix(amps, widths, r):
    return sum(a * np.exp(-(r / w) ** 2) for a, w in zip(amps, widths))


@given(
    amps=st.lists(st.floats(0.1, 2.0), min_size=1, max_size=3),
    widths=st.lists(st.floats(0.3, 3.0), min_size=3, max_size=3),
    p=st.sampled_from([2.5, 3.0, 3.3]),
)
def test_gn_inequality_on_radial_functions(amps, widths, p):
    """|f|_p <= C_p |grad f|^delta |f|^(1-delta), equality only for rescaled W_p."""
    r = np.linspace(0.0, 40.0, 8001)
    f = _gaussian_mix(amps, widths[: len(amps)], r)
    df = np.gradient(f, r)
    w = 4 * np.pi * r**2
    mass = math.sqrt(simpson(w * f**2, x=r))
    grad = math.sqrt(simpson(w * df**2, x=r))
    lp = simpson(w * np.abs(f) ** p, x=r) ** (1 / p)
    d = wp.delta_p(p)
    assert lp <= wp.gn_constant_for(p) * grad**d * mass ** (1 - d) * (1 + 1e-9)


def test_vc_is_closed_form_minimizer():
    params = ModelParams(0.0, 0.0, -1.0, 3.0, 1.0)
    geometry = derive_geometry(params)
    sg = wp.v_c_profile(geometry)
    assert sg.mass_norm == pytest.approx(1.0, rel=1e-9)
    assert sg.energy == pytest.approx(sg.m0, rel=1e-9)
    # |grad v_c| < t_bar_c
    assert sg.grad_norm < geometry.t_bar_c


@given(c=st.floats(0.05, 5.0), lam3=st.floats(-2.0, -0.1))
def test_vc_energy_matches_m0(c, lam3):
    geometry = derive_geometry(ModelParams(0.0, 0.0, lam3, 3.0, c))
    sg = wp.v_c_profile(geometry)
    assert sg.energy == pytest.approx(sg.m0, rel=1e-8)
    assert sg.mass_norm == pytest.approx(c, rel=1e-9)


def test_vc_mass_self_check_raises():
    geometry = derive_geometry(ModelParams(0.0, 0.0, -1.0, 3.0, 1.0))
    broken = replace(geometry, beta_c=geometry.beta_c * 1.01)
    with pytest.raises(RuntimeError):
        wp.v_c_profile(broken)


def test_profile_csv_and_summary(tmp_path):
    prof = wp.ground_profile(3.0)
    path = tmp_path / "w.csv"
    wp.write_profile_csv(prof, path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], prof.w)
    summary = wp.profile_summary(prof)
    assert summary["C_p"] == pytest.approx(C3, rel=1e-12)
    assert summary["W0"] == prof.w0


def test_scaled_profiles_do_not_share_interpolants():
    # regression: interpolants were once cached by array id, which is reused after collection
    base = wp.ground_profile(3.0)
    for amp in (1.0, 2.0, 0.5, 3.0):
        prof = base.scaled(amp, 1.0)
        assert prof.evaluate(np.array([0.0]))[0] == pytest.approx(amp * base.w0, rel=1e-12)
        del prof
