import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from dipolar_gs.params import (
    ModelParams,
    aux_structure_check,
    derive_geometry,
    g_c,
    h_c,
    h_c_prime,
    in_d0,
    lambda_cap,
    validate_regime,
    well_radii,
)

D0 = ModelParams(-1.0, -0.05, -1.0, 3.0, 1.0)

# Derived once from the closed forms with C_3, C_4 from the shooting oracle;
# c_star and t_cstar are checked independently below (h_c = h_c' = 0 at c = c_star).
FROZEN_D0 = {
    "Lambda": 1.418879020478639,
    "c_star": 2.6212613039868864,
    "c_upper": 2.734997098141782,
    "t_cstar": 2.2001059265835274,
    "kappa": 0.000155436873003852,
}


def test_delta_and_lambda_cap():
    g = derive_geometry(D0)
    assert g.delta_p == 0.5
    assert lambda_cap(-1.0, -0.05) == pytest.approx(1.0 + 0.05 * 8 * math.pi / 3, rel=1e-15)
    assert lambda_cap(-1.0, 0.0, "reduced") == pytest.approx(1.0 / (2 * math.pi) ** 3, rel=1e-15)
    assert lambda_cap(-1.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        lambda_cap(-1.0, 0.0, "other")


@pytest.mark.parametrize("name", sorted(FROZEN_D0))
def test_frozen_constants(name):
    assert getattr(derive_geometry(D0), name) == pytest.approx(FROZEN_D0[name], rel=1e-12)


def test_c_star_is_double_root_of_h():
    g1 = derive_geometry(D0)
    g = derive_geometry(D0.with_mass(g1.c_star))
    t = g.t_cstar
    scale = 0.5 * t**2
    assert abs(h_c(t, g)) < 1e-12 * scale
    assert abs(h_c_prime(t, g)) < 1e-12 * t
    assert abs(g.R0 - t) < 1e-10 * t and abs(g.R1 - t) < 1e-10 * t


def test_c_star_below_c_upper():
    g = derive_geometry(D0)
    assert g.c_star < g.c_upper


@pytest.mark.parametrize(
    "l1,l2,expected",
    [(-1.0, -0.05, True), (-1.0, 0.0, True), (-1.0, 0.05, True), (1.0, 1.0, False),
     (0.0, 0.0, False), (-0.1, -0.05, False), (-0.3, 0.05, False), (-0.5, 0.05, True)],
)
def test_in_d0(l1, l2, expected):
    assert in_d0(l1, l2) is expected


def test_example_radii_are_zeros_of_h():
    g = derive_geometry(D0)
    for r in (g.R0, g.R1):
        assert abs(h_c(r, g)) < 1e-10 * 0.5 * r**2
    assert g.ordering_holds()
    assert g.t_bar_c < g.R0 < g.R1


def test_scalar_case_is_flagged_and_unbounded():
    params = ModelParams(0.0, 0.0, -1.0, 3.0, 1.0)
    report = validate_regime(params)
    assert report.ok and report.scalar
    g = derive_geometry(params)
    assert math.isinf(g.c_star) and math.isinf(g.t_cstar)
    assert g.R0 == g.t_bar_c and math.isinf(g.R1)
    assert abs(h_c(g.R0, g)) < 1e-14


def test_regime_rejections():
    assert "not in D0" in " ".join(validate_regime(ModelParams(1.0, 1.0, -1.0, 3.0, 1.0)).reasons)
    above = validate_regime(D0.with_mass(3.0))
    assert not above.ok and "mass above threshold" in above.reasons[0]
    assert not validate_regime(ModelParams(-1.0, -0.05, 1.0, 3.0, 1.0)).ok
    assert not validate_regime(ModelParams(-1.0, -0.05, -1.0, 3.5, 1.0)).ok
    with pytest.raises(ValueError):
        derive_geometry(ModelParams(-1.0, -0.05, 0.5, 3.0, 1.0))
    with pytest.raises(ValueError):
        derive_geometry(ModelParams(-1.0, -0.05, -1.0, 10 / 3, 1.0))
    with pytest.raises(ValueError):
        derive_geometry(ModelParams(-1.0, -0.05, -1.0, 3.0, -1.0))


def test_radii_undefined_above_threshold():
    g = derive_geometry(D0.with_mass(3.0))
    assert math.isnan(g.R0) and math.isnan(g.R1)
    with pytest.raises(ValueError):
        well_radii(g.params, g)


def test_h_splits_into_g_and_cubic():
    g = derive_geometry(D0)
    t = np.geomspace(1e-3, 10, 50)
    assert np.allclose(h_c(t, g), g_c(t, g) - g.cubic_coefficient * t**3, rtol=1e-13, atol=0)


def test_h_prime_matches_finite_difference():
    g = derive_geometry(D0)
    for t in (0.01, 0.3, 4.0):
        e = 1e-6 * t
        fd = (h_c(t + e, g) - h_c(t - e, g)) / (2 * e)
        assert h_c_prime(t, g) == pytest.approx(fd, rel=1e-7)


def test_aux_structure_below_and_above_c_upper():
    g1 = derive_geometry(D0)
    for frac in (0.5, 0.99):
        p = D0.with_mass(frac * g1.c_star)
        assert aux_structure_check(p, derive_geometry(p)).ok
    p = D0.with_mass(1.02 * g1.c_upper)
    rep = aux_structure_check(p, derive_geometry(p))
    assert rep.n_critical == 0 and not rep.psi_condition


def _d0_pair(l2, margin):
    thr = 4 * math.pi / 3 * l2 if l2 <= 0 else -8 * math.pi / 3 * l2
    return thr - margin, l2


@given(
    l2=st.floats(-1.0, 1.0),
    margin=st.floats(0.01, 3.0),
    l3=st.floats(-3.0, -0.05),
    frac=st.floats(0.01, 0.99),
    p=st.sampled_from([2.2, 2.5, 3.0, 3.3]),
)
def test_ordering_chain_property(l2, margin, l3, frac, p):
    l1, l2 = _d0_pair(l2, margin)
    assume(in_d0(l1, l2))
    g1 = derive_geometry(ModelParams(l1, l2, l3, p, 1.0))
    g = derive_geometry(ModelParams(l1, l2, l3, p, frac * g1.c_star))
    assert g.ordering_holds()
    assert g.R0_excess > 0


@given(c=st.floats(0.01, 2.6))
def test_h_negative_inside_well_interior(c):
    g = derive_geometry(D0.with_mass(c))
    # h_c < 0 on (0, R0) and > 0 on (R0, R1)
    t = np.array([0.5 * g.R0, 0.5 * (g.R0 + g.R1)])
    v = h_c(t, g)
    assert v[0] < 0 < v[1]


def test_params_roundtrip(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(D0.to_dict()))
    assert ModelParams.from_json(path) == D0
    assert ModelParams.from_dict(D0.to_dict()) == D0


def test_geometry_to_dict_is_json_safe():
    d = derive_geometry(ModelParams(0.0, 0.0, -1.0, 3.0, 1.0)).to_dict()
    json.dumps(d, allow_nan=False)
    assert d["c_star"] is None and d["params.lambda3"] == -1.0
