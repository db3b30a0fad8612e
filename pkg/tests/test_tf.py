import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SCENARIO_DIR, build
from vsgrlc.model import load_model_file
from vsgrlc.tf import (
    RationalTF,
    bode,
    droop_equivalent,
    gc_ref_step_tfs,
    poles,
    resonance_peak,
    sa_load_step_tfs,
    second_order_overshoot,
    step_response,
    tf_feedback,
    unit_tf,
)

W0 = 314.0
K44 = 190.0 ** 2 / (W0 * 4.4e-3)
SINGLE = [dict(id="u1", j0=300, d0=300, pm_W=1000, feeder_mH=4.4)]


def _zeta_wn(J, D, K):
    return D / (2 * math.sqrt(J * K)), math.sqrt(K / J)


def test_arithmetic():
    a = RationalTF([1], [1, 1])  # 1/(s+1)
    b = RationalTF([2], [2, 1])  # 2/(s+2)
    s = 0.3 + 1.7j
    assert (a + b)(s) == pytest.approx(1 / (s + 1) + 2 / (s + 2))
    assert (a * b)(s) == pytest.approx(2 / ((s + 1) * (s + 2)))
    assert (a - 1)(s) == pytest.approx(1 / (s + 1) - 1)
    assert (-a).dc_gain() == -1.0


def test_feedback_closes_loop():
    g = RationalTF([0, 0, 5], [0, 1])  # 5 s (improper but valid as a loop element)
    cl = tf_feedback(RationalTF([1], [0, 1]), RationalTF.const(2.0))  # (1/s)/(1+2/s) = 1/(s+2)
    assert cl(1j) == pytest.approx(1 / (1j + 2))
    assert not g.proper


def test_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        RationalTF([1], [0, 0])


def test_droop_equivalent():
    J, D = droop_equivalent(1 / 300, 1.0)
    assert (J, D) == pytest.approx((300.0, 300.0))
    with pytest.raises(ValueError):
        droop_equivalent(0.0, 1.0)


def test_unit_tf_second_order():
    G = unit_tf(300, 300, K44)
    zeta, wn = _zeta_wn(300, 300, K44)
    assert G.dc_gain() == 1.0
    assert wn == pytest.approx(9.3325, abs=1e-4)
    assert zeta == pytest.approx(0.0536, abs=1e-4)
    p = poles(G)
    assert p[0].omega_n == pytest.approx(wn)
    assert p[0].zeta == pytest.approx(zeta)


def test_sa_dc_sharing_and_frequency():
    model = build()[0]
    tfs = sa_load_step_tfs(model)
    # at DC every d_k reduces to K_k, so shares reduce to D_i / sum(D)
    assert [g.dc_gain() for g in tfs.dP] == pytest.approx([1 / 6, 1 / 3, 1 / 2], rel=1e-12)
    assert tfs.domega_p.dc_gain() == pytest.approx(-1 / 1800, rel=1e-12)
    assert [g.dc_gain() for g in tfs.domega] == pytest.approx([-1 / 1800] * 3, rel=1e-12)
    assert not tfs.domega_p.proper


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 200))
def test_sa_shares_sum_to_one(sigma, w):
    tfs = sa_load_step_tfs(build()[0])
    s = complex(sigma, w)
    assert sum(g(s) for g in tfs.dP) == pytest.approx(1.0, rel=1e-8, abs=1e-8)


def test_gc_strong_grid_is_single_unit():
    model = build(units=SINGLE, mode="GC")[0]
    tfs = gc_ref_step_tfs(model, "u1")
    zeta, wn = _zeta_wn(300, 300, K44)
    p = poles(tfs.dP[0])
    assert p[0].s.real == pytest.approx(-0.5)
    assert abs(p[0].s.imag) == pytest.approx(wn * math.sqrt(1 - zeta ** 2))
    assert abs(p[0].s.imag) == pytest.approx(9.319, abs=1e-3)
    assert not np.any(tfs.domega_p.num)


def test_gc_weak_grid():
    model = build(mode="GC", lg=66)[0]
    tfs = gc_ref_step_tfs(model, "u1")
    assert tfs.domega_p.dc_gain() == 0.0
    assert tfs.dP[0].dc_gain() == pytest.approx(1.0, rel=1e-12)
    assert tfs.dP[1].dc_gain() == 0.0
    assert all(p.s.real < 0 for p in poles(tfs.dP[0]))
    with pytest.raises(ValueError):
        gc_ref_step_tfs(build()[0], "u1")


def test_bode_unity_and_peak():
    fr = bode(RationalTF.const(1.0), 0.1, 10, 50)
    assert np.all(fr.magnitude_db == 0.0)
    zeta, wn = _zeta_wn(300, 300, K44)
    fr = bode(unit_tf(300, 300, K44), 0.1, 100, 4000)
    pk = resonance_peak(fr)
    expected_db = -20 * math.log10(2 * zeta * math.sqrt(1 - zeta ** 2))
    assert pk.omega == pytest.approx(wn * math.sqrt(1 - 2 * zeta ** 2), rel=1e-3)
    assert pk.omega == pytest.approx(9.302, abs=5e-3)
    assert pk.peak_db_above_dc == pytest.approx(expected_db, abs=0.01)
    assert pk.peak_db_above_dc == pytest.approx(19.41, abs=0.01)


def test_bode_phase_of_integrator():
    fr = bode(RationalTF([1], [0, 1]), 0.1, 10, 5)
    np.testing.assert_allclose(fr.phase_deg, -90.0)
    np.testing.assert_allclose(fr.magnitude_db, -20 * np.log10(fr.omegas))


def test_resonance_by_proportionality():
    for name, has_peak in [("pair_mismatched", True), ("pair_proportional", False)]:
        model, _, _ = load_model_file(SCENARIO_DIR / f"{name}.json")
        pk = resonance_peak(bode(sa_load_step_tfs(model).dP[0], 0.1, 100, 2000), tol_db=0.01)
        if has_peak:
            assert 8 <= pk.omega <= 12
        else:
            assert pk is None


def test_poles_example():
    p = poles(RationalTF([1], [2, 3, 1]))
    assert [q.s for q in p] == pytest.approx([-2, -1])
    den = np.array([5.0, 1.0, 4.0, 2.0, 1.0])
    for q in poles(RationalTF([1], den)):
        assert abs(np.polynomial.polynomial.polyval(q.s, den)) < 1e-9


def test_step_first_order():
    t, y = step_response(RationalTF([1], [1, 1]), 5.0, 0.001)
    assert y[1000] == pytest.approx(1 - math.exp(-1), abs=1e-9)
    assert y[0] == 0.0


def test_step_overshoot():
    G = unit_tf(300, 300, K44)
    zeta, _ = _zeta_wn(300, 300, K44)
    t, y = step_response(G, 5.0, 0.001)
    assert y.max() - 1 == pytest.approx(second_order_overshoot(zeta), rel=1e-4)
    assert y.max() - 1 == pytest.approx(0.845, abs=1e-3)


def test_step_static_and_improper():
    t, y = step_response(RationalTF.const(3.0), 1.0, 0.1, amplitude=2.0)
    assert np.all(y == 6.0)
    with pytest.raises(ValueError):
        step_response(sa_load_step_tfs(build()[0]).domega_p, 1.0, 0.001)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 10.0), st.floats(0.4, 1.5), st.floats(-3, 3))
def test_step_final_value(wn, zeta, k):
    G = RationalTF([k * wn * wn], [wn * wn, 2 * zeta * wn, 1.0])
    slowest = wn * (zeta - math.sqrt(max(zeta * zeta - 1, 0.0)))
    t, y = step_response(G, 25.0 / slowest, 0.01 / wn)
    assert y[-1] == pytest.approx(G.dc_gain(), abs=1e-6 * max(1.0, abs(k)))
