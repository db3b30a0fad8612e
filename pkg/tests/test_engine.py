import math

import numpy as np
import pytest

from conftest import build
from vsgrlc.engine import (
    GridState,
    LossOfSynchronism,
    NetworkSolveError,
    Simulator,
    SimulationError,
    TimeSeries,
    equilibrium_init,
    network_solve,
    simulate,
)

X44 = 314 * 4.4e-3
SINGLE = [dict(id="u1", j0=300, d0=300, pm_W=1000, feeder_mH=4.4)]


def test_network_no_load():
    sol = network_solve([0.0, 0.0], [190.0, 190.0], [1.0, 2.0], [0.0, 0.0], 0.0, 0.0)
    assert sol.Vp == pytest.approx(190.0)
    assert sol.P == pytest.approx((0.0, 0.0), abs=1e-9)
    assert sol.Q == pytest.approx((0.0, 0.0), abs=1e-9)


def test_network_single_unit_angle():
    # with both voltages at 190 V the load angle follows from P = V^2 sin(d)/X
    d = math.asin(500 * X44 / 190 ** 2)
    assert d == pytest.approx(0.01913, abs=1e-5)
    q_load = 190 ** 2 * (math.cos(d) - 1) / X44
    sol = network_solve([d], [190.0], [X44], [0.0], 500.0, q_load)
    assert sol.theta_p == pytest.approx(0.0, abs=1e-10)
    assert sol.Vp == pytest.approx(190.0, rel=1e-10)
    assert sol.P[0] == pytest.approx(500.0, rel=1e-9)


def test_network_symmetric_split():
    sol = network_solve([0.1, 0.1], [190.0, 190.0], [2.0, 2.0], [0.001, 0.001], 1000.0, 200.0)
    assert sol.P[0] == pytest.approx(500.0) and sol.P[1] == pytest.approx(500.0)
    assert sol.Q[0] == pytest.approx(sol.Q[1])
    assert sum(sol.Q) == pytest.approx(200.0)


def test_network_stiff_grid_absorbs_imbalance():
    sol = network_solve([0.0], [190.0], [X44], [0.0], 300.0, 0.0, GridState(190.0, 0.0))
    assert sol.Vp == 190.0 and sol.Pg == pytest.approx(300.0)


def test_network_solve_failure():
    # far beyond the static transfer limit V^2/X of the single branch
    with pytest.raises(NetworkSolveError):
        network_solve([0.0], [190.0], [X44], [0.0], 10 * 190 ** 2 / X44, 0.0)


def test_equilibrium_zero():
    st = equilibrium_init(build()[0])
    assert st.omega == pytest.approx((314.0,) * 3)
    assert st.P == pytest.approx((0.0,) * 3, abs=1e-9)


def test_equilibrium_loaded_offset():
    st = equilibrium_init(build(load=(700.0, 0.0))[0])
    # every unit has D (w - w0) = -P_i, so the offset is -P_L / sum(D)
    assert st.omega[0] - 314.0 == pytest.approx(-700 / 1800, rel=1e-9)
    assert st.omega[0] - 314.0 == pytest.approx(-0.3889, abs=1e-4)
    assert np.array(st.P) / 700 == pytest.approx([1 / 6, 1 / 3, 1 / 2], rel=1e-9)


def test_equilibrium_grid_reference():
    units = [dict(SINGLE[0], pr_W=100)]
    st = equilibrium_init(build(units=units, mode="GC")[0])
    assert st.P[0] == pytest.approx(100.0, rel=1e-9)
    assert st.omega[0] == 314.0


def test_equilibrium_is_fixed_point():
    model, graph, scenario = build(load=(700.0, 100.0), t_end=0.2)
    sim = Simulator(model, graph, scenario)
    start = sim.snapshot()
    for _ in range(100):
        state = sim.step()
    np.testing.assert_allclose(state.omega, start.omega, atol=1e-9)
    np.testing.assert_allclose(state.P, start.P, atol=1e-6)


def test_single_unit_load_step_terminal_frequency():
    units = [dict(id="u1", j0=300, d0=300, pm_W=1000, feeder_mH=11)]
    series = simulate(*build(units=units, events=[dict(t_s=0.0, kind="set_load", p_W=700, q_var=0)], t_end=12.0))
    assert series["unit1_omega_rad_s"][-1] - 314 == pytest.approx(-700 / 300, abs=1e-3)
    assert series["unit1_P_W"][-1] == pytest.approx(700.0, rel=1e-6)


def test_three_unit_sharing_and_oscillation():
    series = simulate(*build(events=[dict(t_s=0.5, kind="set_load", p_W=700, q_var=0)], t_end=12.0, stride=1))
    P = series.stack("P_W")
    np.testing.assert_allclose(P[-1] / 700, [1 / 6, 1 / 3, 1 / 2], rtol=0.01)
    # unequal J:D:K ratios make unit 1 swing before it settles
    dp1 = np.diff(P[series.t > 0.5, 0])
    dp1 = dp1[np.abs(dp1) > 1e-6]
    assert np.count_nonzero(np.diff(np.sign(dp1))) >= 2


def test_loss_of_synchronism():
    model, graph, scenario = build(units=SINGLE, mode="GC",
                                   events=[dict(t_s=0.1, kind="set_pref", unit="u1", p_W=60000)], t_end=3.0)
    with pytest.raises(LossOfSynchronism) as exc:
        simulate(model, graph, scenario)
    assert isinstance(exc.value, SimulationError)
    assert exc.value.t is not None


def test_csv_round_trip(tmp_path):
    series = simulate(*build(events=[dict(t_s=0.1, kind="set_load", p_W=300, q_var=50)], t_end=0.5))
    path = tmp_path / "run.csv"
    series.to_csv(path)
    again = TimeSeries.from_csv(path)
    assert again.n_units == 3
    assert np.array_equal(again.data, series.data)
    assert path.read_text().splitlines()[0].startswith("t_s,unit1_P_W,unit1_Q_var,unit1_omega_rad_s")


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        TimeSeries.from_csv(path)
