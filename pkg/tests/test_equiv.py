import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SCENARIO_DIR, build
from vsgrlc.equiv import (
    BranchRLC,
    DesignInputs,
    branch_impedance,
    design_params,
    from_equivalent_circuit,
    h0_magnitude,
    proportionality_residual,
    rlc_from_coefficients,
    suggest_virtual_reactance,
    to_equivalent_circuit,
)
from vsgrlc.model import UnitParams, load_model_file, with_zv0

EXP_UNITS = [
    dict(id="dg1", j0=100, d0=100, pm_W=1000, feeder_mH=2.2),
    dict(id="dg2", j0=200, d0=200, pm_W=2000, feeder_mH=15.4),
]


def _unit(**kw):
    base = dict(id="u", J0=300.0, D0=300.0, Pm=1000.0, nq=1.0, Lf_feeder=4.4e-3, V0=190.0)
    base.update(kw)
    return UnitParams(**base)


def test_circuit_mapping_example():
    b = to_equivalent_circuit(_unit(), 314.0, V0=190.0)
    assert b.C == 300.0
    assert b.R == pytest.approx(1 / 300)
    assert b.L == pytest.approx(314 * 4.4e-3 / 190 ** 2)
    assert b.L == pytest.approx(3.827e-5, rel=1e-3)


def test_virtual_reactance_retunes_inductance():
    u = _unit()
    assert to_equivalent_circuit(u, 314.0, V0=190.0, zv=1.3816).L == pytest.approx(2 * to_equivalent_circuit(u, 314.0, V0=190.0).L)


@given(st.floats(1e-2, 1e5), st.floats(1e-2, 1e5), st.floats(1e-2, 1e6))
def test_round_trip(J, D, K):
    assert from_equivalent_circuit(rlc_from_coefficients(J, D, K)) == pytest.approx((J, D, K), rel=1e-12)


def test_branch_rejects_nonpositive():
    with pytest.raises(ValueError):
        BranchRLC(C=0.0, R=1.0, L=1.0)


def test_impedance_limits_and_oracle():
    b = BranchRLC(C=300.0, R=1 / 300, L=3.827e-5)
    assert branch_impedance(b, 0.0) == pytest.approx(b.R)
    w = 1e6
    assert branch_impedance(b, w) == pytest.approx(1j * w * b.L, rel=1e-6)
    ws = np.array([0.5, 3.0, 9.3])
    # oracle: parallel combination of admittances, then series inductor
    y_par = 1 / b.R + 1j * ws * b.C
    np.testing.assert_allclose(branch_impedance(b, ws), 1 / y_par + 1j * ws * b.L, rtol=1e-14)
    with pytest.raises(ValueError):
        branch_impedance(b, -1.0)


def test_residuals():
    sim = build()[0]
    assert proportionality_residual(sim) == pytest.approx((3 - 11 / 6.6) / 3, rel=1e-12)
    assert proportionality_residual(sim) == pytest.approx(0.4444, abs=1e-4)
    exp = build(units=EXP_UNITS)[0]
    assert proportionality_residual(exp) == pytest.approx((2 - 2.2 / 15.4) / 2, rel=1e-12)
    assert proportionality_residual(exp) == pytest.approx(0.9286, abs=1e-4)
    mism, _, _ = load_model_file(SCENARIO_DIR / "pair_mismatched.json")
    prop, _, _ = load_model_file(SCENARIO_DIR / "pair_proportional.json")
    assert proportionality_residual(mism) == pytest.approx(0.5, rel=1e-12)
    assert proportionality_residual(prop) == pytest.approx(0.0, abs=1e-12)
    assert proportionality_residual(build(units=EXP_UNITS[:1])[0]) == 0.0


@given(st.floats(0.1, 10.0))
def test_residual_scale_invariant(c):
    units = [dict(u, j0=u["j0"] * c, d0=u["d0"] * c) for u in EXP_UNITS]
    base = proportionality_residual(build(units=EXP_UNITS)[0])
    assert proportionality_residual(build(units=units)[0]) == pytest.approx(base, rel=1e-9)


@pytest.mark.parametrize("units", [None, EXP_UNITS])
def test_suggestion_restores_proportionality(units):
    model = build(units=units)[0]
    sug = suggest_virtual_reactance(model)
    assert sug.needed
    assert min(sug.added_Zv) == 0.0
    fixed = with_zv0(model, [u.Zv0 + z for u, z in zip(model.units, sug.added_Zv)])
    assert proportionality_residual(fixed) < 1e-9


def test_suggestion_none_needed():
    prop, _, _ = load_model_file(SCENARIO_DIR / "pair_proportional.json")
    sug = suggest_virtual_reactance(prop)
    assert not sug.needed
    assert sug.added_Zv == (0.0, 0.0)


def test_design_example():
    r = design_params(DesignInputs(300, 1, 1, 10))
    assert (r.J0, r.D0, r.omega_c, r.tau, r.mu) == pytest.approx((300, 300, 1, 0.1, 0.1))
    assert r.k_v is None
    r = design_params(DesignInputs(300, 1, 1, 10, rho=0.05, nq_l2_h0=5))
    assert r.k_v == pytest.approx(0.01)
    r2 = design_params(DesignInputs(300, 1, 1, 10, rho=0.05, nq=1, lambda2=1, H0_mag=5))
    assert r2.k_v == pytest.approx(0.01)
    assert set(r.to_dict()) == {"J0", "D0", "omega_c", "tau", "mu", "k_v"}


@pytest.mark.parametrize("kw", [
    dict(rocof_max=0), dict(k_HP=5), dict(rho=0.9, nq_l2_h0=1), dict(rho=0.1),
])
def test_design_validation(kw):
    base = dict(dP_max=300, rocof_max=1, dw_max=1)
    base.update(kw)
    with pytest.raises(ValueError):
        DesignInputs(**base)


@given(st.floats(1, 1e4), st.floats(0.01, 10), st.floats(0.01, 10), st.floats(1.01, 10))
def test_design_monotone(dp, rocof, dw, f):
    a = design_params(DesignInputs(dp, rocof, dw))
    b = design_params(DesignInputs(dp * f, rocof, dw))
    assert b.J0 > a.J0 and b.D0 > a.D0
    assert b.omega_c == pytest.approx(a.omega_c)
    c = design_params(DesignInputs(dp, rocof * f, dw))
    assert c.J0 < a.J0 and c.tau < a.tau


def test_h0_magnitude():
    assert h0_magnitude(190, 185, 0.0, 1.3816) == pytest.approx(190 * 5 / 1.3816 ** 2)
    assert h0_magnitude(190, 190, 1.0, 2.0) == 0.0
    assert h0_magnitude(190, 185, 1.0, 1.0) == pytest.approx(h0_magnitude(190, 185, 0.5, 0.5) / 4)
    with pytest.raises(ValueError):
        h0_magnitude(190, 185, 0.0, 0.0)
