"""Quasi-static phasor simulation of paralleled VSG units.

Each unit is a voltage source behind its branch reactance
``X_i = omega0*Lf_i + Zv0_i + Zv_i`` feeding the PCC, where a constant-power
load and (in grid-connected mode) a grid branch attach.  The swing equation
per unit is integrated with classical RK4; the algebraic PCC balance is
re-solved by Newton at every RK stage.

Angles are kept in a frame rotating at ``omega0``.  The inner loop works on
plain Python floats: with a handful of units numpy call overhead dominates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .ctrl import (
    AdaptiveDampingParams,
    AdaptiveInertiaParams,
    CommChannel,
    DscParams,
    DviParams,
    dsc_term,
    dvi_rates,
    lyapunov_v,
)
from .model import (
    GC,
    CommGraph,
    CommLoss,
    DisableController,
    EnableController,
    GridConnect,
    NetworkModel,
    Scenario,
    SetLoad,
    SetPref,
)

MAX_NEWTON = 50
HALF_PI = 0.5 * math.pi


class SimulationError(RuntimeError):
    """A run aborted; ``t`` holds the simulation time of the failure."""

    def __init__(self, msg: str, t: float | None = None):
        super().__init__(msg if t is None else f"t={t:.6f} s: {msg}")
        self.t = t


class NetworkSolveError(SimulationError):
    def __init__(self, residual: float, iterations: int, t: float | None = None):
        super().__init__(f"network solve did not converge (residual {residual:.3e} after {iterations} iterations)", t)
        self.residual = residual
        self.iterations = iterations


class LossOfSynchronism(SimulationError):
    pass


@dataclass(frozen=True)
class GridState:
    """Grid branch seen from the PCC.  ``X == 0`` pins the PCC to the grid."""

    V: float
    X: float
    theta: float = 0.0


@dataclass(frozen=True)
class NetworkSolution:
    Vp: float
    theta_p: float
    P: tuple
    Q: tuple
    V: tuple
    Pg: float = 0.0
    Qg: float = 0.0
    iterations: int = 0
    residual: float = 0.0


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _unit_flows(theta, thp, vp, V0, X, nqv):
    """Per-unit P, Q, internal V at PCC state (thp, vp) plus balance partials."""
    P = []
    Q = []
    V = []
    sp = sq = 0.0
    pt = pv = qt = qv = 0.0
    cos = math.cos
    sin = math.sin
    for th, v0, x, n in zip(theta, V0, X, nqv):
        d = th - thp
        c = cos(d)
        s = sin(d)
        num = v0 * vp * c - vp * vp
        den = x + n * vp * c
        q = num / den
        v = v0 - n * q
        p = v * vp * s / x
        den2 = den * den
        dq_t = (v0 * vp * s * den - num * n * vp * s) / den2
        dq_v = ((v0 * c - 2.0 * vp) * den - num * n * c) / den2
        dp_t = (-n * dq_t * vp * s - v * vp * c) / x
        dp_v = (-n * dq_v * vp * s + v * s) / x
        P.append(p)
        Q.append(q)
        V.append(v)
        sp += p
        sq += q
        pt += dp_t
        pv += dp_v
        qt += dq_t
        qv += dq_v
    return P, Q, V, sp, sq, pt, pv, qt, qv


def network_solve(theta, V0, X, nqv, load_P: float, load_Q: float, grid: GridState | None = None,
                  guess: tuple[float, float] | None = None) -> NetworkSolution:
    """Solve the PCC voltage so active and reactive power balance.

    Units: ``P_i = V_i Vp sin(d_i)/X_i``, ``Q_i = (V_i Vp cos d_i - Vp^2)/X_i``
    with ``V_i = V0_i - nqv_i Q_i`` and ``d_i = theta_i - theta_p``.  The grid
    branch (when present) contributes the analogous flows; a stiff grid
    (``grid.X == 0``) fixes ``Vp, theta_p`` and absorbs the imbalance.
    Convergence requires ``max|residual| < 1e-9 * max(1, |load_P|)``.
    """
    if len(theta) == 0:
        raise ValueError("network needs at least one unit")
    if min(X) <= 0:
        raise ValueError("branch reactances must be positive")
    tol = 1e-9 * max(1.0, abs(load_P))
    if grid is not None and grid.X == 0.0:
        P, Q, V, sp, sq = _unit_flows(theta, grid.theta, grid.V, V0, X, nqv)[:5]
        return NetworkSolution(grid.V, grid.theta, tuple(P), tuple(Q), tuple(V),
                               load_P - sp, load_Q - sq, 0, 0.0)
    if guess is None:
        vp, thp = float(np.mean(V0)), float(np.mean(theta))
    else:
        vp, thp = guess
    pg = qg = 0.0
    for it in range(MAX_NEWTON + 1):
        P, Q, V, sp, sq, pt, pv, qt, qv = _unit_flows(theta, thp, vp, V0, X, nqv)
        if grid is not None:
            dg = grid.theta - thp
            cg = math.cos(dg)
            sg = math.sin(dg)
            pg = grid.V * vp * sg / grid.X
            qg = (grid.V * vp * cg - vp * vp) / grid.X
            sp += pg
            sq += qg
            pt += -grid.V * vp * cg / grid.X
            pv += grid.V * sg / grid.X
            qt += grid.V * vp * sg / grid.X
            qv += (grid.V * cg - 2.0 * vp) / grid.X
        fp = sp - load_P
        fq = sq - load_Q
        res = max(abs(fp), abs(fq))
        if res < tol:
            return NetworkSolution(vp, thp, tuple(P), tuple(Q), tuple(V), pg, qg, it, res)
        if it == MAX_NEWTON:
            break
        det = pt * qv - pv * qt
        if det == 0.0 or not math.isfinite(det):
            break
        thp -= (fp * qv - pv * fq) / det
        vp -= (pt * fq - fp * qt) / det
        if not (vp > 0 and math.isfinite(vp)):
            break
    raise NetworkSolveError(res, it)


# ---------------------------------------------------------------- state & series


@dataclass(frozen=True)
class SimState:
    t: float
    theta: tuple
    omega: tuple
    Zv: tuple  # total virtual reactance Zv0 + integrator
    hpf_state: tuple
    J_eff: tuple
    D_eff: tuple
    Vp: float
    theta_p: float
    omega_p: float
    P: tuple
    Q: tuple
    Pg: float


def csv_columns(n: int) -> list[str]:
    cols = ["t_s"]
    for i in range(1, n + 1):
        cols += [f"unit{i}_P_W", f"unit{i}_Q_var", f"unit{i}_omega_rad_s",
                 f"unit{i}_J_eff", f"unit{i}_D_eff", f"unit{i}_Zv_ohm"]
    return cols + ["vp_V", "theta_p_rad", "omega_p_rad_s", "pg_W"]


@dataclass
class TimeSeries:
    """Recorded trajectory.  ``data`` has one column per :func:`csv_columns` entry."""

    n_units: int
    data: np.ndarray
    lyapunov: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    events: tuple = ()

    @property
    def columns(self) -> list[str]:
        return csv_columns(self.n_units)

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def unit(self, i: int, quantity: str) -> np.ndarray:
        """Column for 0-based unit ``i``; ``quantity`` like ``'P_W'``."""
        return self[f"unit{i + 1}_{quantity}"]

    def stack(self, quantity: str) -> np.ndarray:
        return np.column_stack([self.unit(i, quantity) for i in range(self.n_units)])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.data.tolist():
                fh.write(",".join(repr(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        n = (len(header) - 5) // 6
        if header != csv_columns(n):
            raise ValueError(f"{path}: unexpected CSV header")
        return cls(n, np.array(rows, dtype=float).reshape(len(rows), len(header)))


# ---------------------------------------------------------------- simulator


class Simulator:
    """Stepwise simulation of one scenario.

    ``simulate()`` is the usual entry point; the class is exposed so tests can
    drive single steps and inspect :class:`SimState` snapshots.
    """

    def __init__(self, model: NetworkModel, graph: CommGraph | None, scenario: Scenario, state=None):
        self.model = model
        self.graph = graph if graph is not None else CommGraph.complete(model.n)
        if self.graph.n != model.n:
            raise ValueError("communication graph size does not match the unit count")
        self.scenario = scenario
        self.dt = scenario.dt
        n = self.n = model.n
        w0 = self.omega0 = model.omega0
        us = model.units
        self.J0 = [u.J0 for u in us]
        self.D0 = [u.D0 for u in us]
        self.V0 = [u.V0 for u in us]
        self.nq = [u.nq for u in us]
        self.nqv = [model.qv_droop * u.nq for u in us]
        self.Xfix = [w0 * u.Lf_feeder + u.Zv0 for u in us]
        self.Zv0 = [u.Zv0 for u in us]
        if min(self.Xfix) <= 0:
            raise ValueError("fixed branch reactance omega0*Lf + Zv0 must be positive")
        self.Pr = [u.Pr for u in us]
        self.load_P = model.load_P
        self.load_Q = model.load_Q
        self.grid_on = model.grid.mode == GC
        self.grid_theta0 = 0.0
        self.grid_t0 = 0.0

        ctrl = {c.kind: c for c in scenario.controllers}
        self.dvi: DviParams | None = ctrl.get("dvi")
        self.dsc: DscParams | None = ctrl.get("dsc")
        self.aj: AdaptiveInertiaParams | None = ctrl.get("adaptive_inertia")
        self.ad: AdaptiveDampingParams | None = ctrl.get("adaptive_damping")
        self.enabled = {k: c.enabled for k, c in ctrl.items()}
        self.x_floor = [(self.dvi.floor_frac if self.dvi else 0.1) * w0 * u.Lf_feeder for u in us]

        ratio = self.graph.sample_period / self.dt
        self.tick_every = max(1, int(round(ratio)))
        if abs(ratio - self.tick_every) > 1e-6 * ratio:
            raise ValueError("comm sample period must be an integer multiple of dt")
        A = self.graph.A
        self.A = A
        self.L = self.graph.L
        self.dvi_chan = CommChannel(A, self.graph.delay_samples, self.graph.fault_windows)
        self.dsc_chan = CommChannel(A, self.graph.delay_samples, self.graph.fault_windows)
        self.zv_rate = [0.0] * n
        self.dsc_torque = [0.0] * n

        self.k = 0
        self._events = sorted(
            ((self._event_step(e.t), i, e) for i, e in enumerate(scenario.events)), key=lambda r: (r[0], r[1])
        )
        self._next_event = 0
        self._lyap: list = []

        if state is None:
            state = equilibrium_init(model)
        self.theta = list(state.theta)
        self.omega = list(state.omega)
        self.zv = [z - z0 for z, z0 in zip(state.Zv, self.Zv0)]
        self.zJ = list(self.Pr)
        self.zD = list(self.Pr)
        self.omega_p = state.omega_p
        self._sol = None
        self._sol = self._solve(self.theta, self.zv, 0.0)
        self.theta_p_prev = self._sol.theta_p

    # -- helpers -------------------------------------------------------------

    def _event_step(self, t: float) -> int:
        return int(math.ceil(t / self.dt - 1e-9))

    @property
    def t(self) -> float:
        return self.k * self.dt

    def _grid(self, t: float) -> GridState | None:
        if not self.grid_on:
            return None
        g = self.model.grid
        return GridState(g.Vg, self.omega0 * g.Lg, self.grid_theta0 + (g.omega_g - self.omega0) * (t - self.grid_t0))

    def _solve(self, theta, zv, t) -> NetworkSolution:
        X = [xf + z for xf, z in zip(self.Xfix, zv)]
        guess = (self._sol.Vp, self._sol.theta_p) if self._sol is not None else None
        try:
            return network_solve(theta, self.V0, X, self.nqv, self.load_P, self.load_Q, self._grid(t), guess)
        except NetworkSolveError as exc:
            raise NetworkSolveError(exc.residual, exc.iterations, t) from None

    def _coefficients(self, zJ, zD):
        J = self.J0
        D = self.D0
        if self.aj is not None and self.enabled["adaptive_inertia"]:
            g = self.aj.mu / self.aj.tau
            frac = self.aj.j_min_frac
            J = [max(j0 - abs(g * (pr - z)), frac * j0) for j0, pr, z in zip(self.J0, self.Pr, zJ)]
        if self.ad is not None and self.enabled["adaptive_damping"]:
            g = self.ad.mu / self.ad.tau
            D = [d0 + abs(g * (pr - z)) for d0, pr, z in zip(self.D0, self.Pr, zD)]
        return J, D

    def _rhs(self, y, t, sol=None):
        n = self.n
        theta = y[0:n]
        omega = y[n:2 * n]
        zv = y[2 * n:3 * n]
        zJ = y[3 * n:4 * n]
        zD = y[4 * n:5 * n]
        if sol is None:
            sol = self._solve(theta, zv, t)
            self._sol = sol
        J, D = self._coefficients(zJ, zD)
        w0 = self.omega0
        dth = [w - w0 for w in omega]
        torque = [pr - p - d * (w - w0) + m for pr, p, d, w, m in zip(self.Pr, sol.P, D, omega, self.dsc_torque)]
        if self.aj is not None and self.aj.form == "momentum" and self.enabled["adaptive_inertia"]:
            # d(J dw)/dt = torque  ->  J d(dw)/dt = torque - dJ/dt * dw
            g = self.aj.mu / self.aj.tau
            for i, (j0, pr, z, j) in enumerate(zip(self.J0, self.Pr, zJ, J)):
                if j > self.aj.j_min_frac * j0:
                    torque[i] -= abs(g * (pr - z)) / self.aj.tau * (omega[i] - w0)
        dw = [q / j for q, j in zip(torque, J)]
        tauJ = self.aj.tau if self.aj is not None else 1.0
        tauD = self.ad.tau if self.ad is not None else 1.0
        dzJ = [(pr - z) / tauJ for pr, z in zip(self.Pr, zJ)]
        dzD = [(pr - z) / tauD for pr, z in zip(self.Pr, zD)]
        return dth + dw + list(self.zv_rate) + dzJ + dzD

    # -- events & communication ----------------------------------------------

    def _apply_events(self) -> None:
        while self._next_event < len(self._events) and self._events[self._next_event][0] <= self.k:
            e = self._events[self._next_event][2]
            self._next_event += 1
            if isinstance(e, SetLoad):
                self.load_P, self.load_Q = e.P, e.Q
            elif isinstance(e, SetPref):
                self.Pr[self.model.index(e.unit)] = e.P
            elif isinstance(e, EnableController):
                self.enabled[e.name] = True
            elif isinstance(e, DisableController):
                self.enabled[e.name] = False
            elif isinstance(e, CommLoss):
                self.dvi_chan.lost = self.dsc_chan.lost = e.on
            elif isinstance(e, GridConnect):
                if e.on and not self.grid_on:
                    # ideal synchronising switch: grid angle matches the PCC at closure
                    self.grid_theta0 = self._sol.theta_p
                    self.grid_t0 = self.t
                self.grid_on = e.on

    def _communicate(self, sol: NetworkSolution) -> None:
        t = self.t
        x = [q * w for q, w in zip(sol.Q, self.nq)]
        self._lyap.append((t, lyapunov_v(x, self.L)))
        if self.dvi_chan.tick(t, x) and self.dvi is not None and self.enabled["dvi"]:
            rx = self.dvi_chan.received(x)
            self.zv_rate = dvi_rates(x, rx, self.A, self.dvi.k_v, self.dvi.sign).tolist()
        else:
            self.zv_rate = [0.0] * self.n
        if self.dsc_chan.tick(t, self.omega) and self.dsc is not None and self.enabled["dsc"]:
            rx = self.dsc_chan.received(self.omega)
            self.dsc_torque = dsc_term(self.A, rx, self.dsc.k_dsc).tolist()
        else:
            self.dsc_torque = [0.0] * self.n

    # -- stepping ------------------------------------------------------------

    def prepare(self) -> NetworkSolution:
        """Apply due events, re-solve the network and exchange messages at the current boundary."""
        self._apply_events()
        sol = self._solve(self.theta, self.zv, self.t)
        self._sol = sol
        if self.k % self.tick_every == 0:
            self._communicate(sol)
        return sol

    def advance(self, sol: NetworkSolution) -> None:
        """One RK4 step from the current boundary (``sol`` is its network solution)."""
        n = self.n
        h = self.dt
        t = self.t
        y = self.theta + self.omega + self.zv + self.zJ + self.zD
        k1 = self._rhs(y, t, sol)
        k2 = self._rhs([a + 0.5 * h * b for a, b in zip(y, k1)], t + 0.5 * h)
        k3 = self._rhs([a + 0.5 * h * b for a, b in zip(y, k2)], t + 0.5 * h)
        k4 = self._rhs([a + h * b for a, b in zip(y, k3)], t + h)
        y = [a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]
        self.theta = y[0:n]
        self.omega = y[n:2 * n]
        zv = y[2 * n:3 * n]
        self.zv = [max(z, lo - xf) for z, lo, xf in zip(zv, self.x_floor, self.Xfix)]
        self.zJ = y[3 * n:4 * n]
        self.zD = y[4 * n:5 * n]
        self.k += 1
        self._sol = self._solve(self.theta, self.zv, self.t)
        for th in self.theta:
            if abs(_wrap(th - self._sol.theta_p)) > HALF_PI:
                raise LossOfSynchronism("unit angle left +-pi/2 of the PCC (loss of synchronism)", self.t)
        if self.grid_on and self.model.grid.stiff:
            self.omega_p = self.model.grid.omega_g
        else:
            raw = self.omega0 + (self._sol.theta_p - self.theta_p_prev) / h
            # first-order smoothing, time constant 10*dt (backward Euler)
            self.omega_p += (raw - self.omega_p) / 11.0
        self.theta_p_prev = self._sol.theta_p

    def step(self) -> SimState:
        sol = self.prepare()
        self.advance(sol)
        return self.snapshot()

    def snapshot(self, sol: NetworkSolution | None = None) -> SimState:
        sol = sol or self._sol
        J, D = self._coefficients(self.zJ, self.zD)
        return SimState(
            t=self.t,
            theta=tuple(self.theta),
            omega=tuple(self.omega),
            Zv=tuple(z0 + z for z0, z in zip(self.Zv0, self.zv)),
            hpf_state=tuple(self.zJ),
            J_eff=tuple(J),
            D_eff=tuple(D),
            Vp=sol.Vp,
            theta_p=sol.theta_p,
            omega_p=self.omega_p,
            P=sol.P,
            Q=sol.Q,
            Pg=sol.Pg,
        )

    def _row(self, sol: NetworkSolution) -> list:
        J, D = self._coefficients(self.zJ, self.zD)
        row = [self.t]
        for i in range(self.n):
            row += [sol.P[i], sol.Q[i], self.omega[i], J[i], D[i], self.Zv0[i] + self.zv[i]]
        row += [sol.Vp, sol.theta_p, self.omega_p, sol.Pg if self.grid_on else 0.0]
        return row

    def run(self) -> TimeSeries:
        n_steps = int(round(self.scenario.t_end / self.dt))
        stride = self.scenario.output_stride
        rows = []
        while True:
            sol = self.prepare()
            if self.k % stride == 0:
                rows.append(self._row(sol))
            if self.k >= n_steps:
                break
            self.advance(sol)
        data = np.array(rows, dtype=float)
        lyap = np.array(self._lyap, dtype=float).reshape(-1, 2)
        return TimeSeries(self.n, data, lyap, tuple(self.scenario.events))


def simulate(model: NetworkModel, graph: CommGraph | None, scenario: Scenario, state: SimState | None = None) -> TimeSeries:
    """Run ``scenario`` from the model's equilibrium (or ``state``) to ``t_end``.

    Controllers are taken from ``scenario.controllers``; traditional VSG
    behaviour is what remains when none is configured or enabled.
    """
    return Simulator(model, graph, scenario, state).run()


# ---------------------------------------------------------------- equilibrium


def equilibrium_init(model: NetworkModel, tol: float = 1e-9) -> SimState:
    """Steady state of ``model`` with every swing-equation right-hand side zero.

    Stand-alone: all units share one frequency offset and the PCC angle is
    pinned at zero.  Grid-connected: units run at the grid frequency.
    """
    n = model.n
    w0 = model.omega0
    V0 = [u.V0 for u in model.units]
    X = [w0 * u.Lf_feeder + u.Zv0 for u in model.units]
    nqv = [model.qv_droop * u.nq for u in model.units]
    D = np.array([u.D0 for u in model.units])
    Pr = np.array([u.Pr for u in model.units])
    g = model.grid
    gc = g.mode == GC
    stiff = gc and g.stiff
    grid = GridState(g.Vg, w0 * g.Lg, 0.0) if gc else None
    load_P, load_Q = model.load_P, model.load_Q
    scale = max(1.0, abs(load_P))

    def unpack(z):
        theta = list(z[:n])
        if stiff:
            return theta, 0.0, g.Vg, g.omega_g - w0
        if gc:
            return theta, z[n], z[n + 1], g.omega_g - w0
        return theta, 0.0, z[n + 1], z[n]

    def residual(z):
        theta, thp, vp, dw = unpack(z)
        if vp <= 0:
            return np.full(z.size, 1e6)
        P, Q, _, sp, sq = _unit_flows(theta, thp, vp, V0, X, nqv)[:5]
        f = list(Pr - np.array(P) - D * dw)
        if stiff:
            return np.array(f)
        if gc:
            dg = -thp
            sp += g.Vg * vp * math.sin(dg) / grid.X
            sq += (g.Vg * vp * math.cos(dg) - vp * vp) / grid.X
        return np.array(f + [sp - load_P, sq - load_Q])

    if stiff:
        z0 = np.zeros(n)
    elif gc:
        z0 = np.r_[np.zeros(n), 0.0, g.Vg]
    else:
        z0 = np.r_[np.zeros(n), (Pr.sum() - load_P) / D.sum(), float(np.mean(V0))]
    sol = optimize.root(residual, z0, method="hybr", options={"xtol": 1e-14})
    z = sol.x
    res = float(np.max(np.abs(residual(z))))
    if not res < tol * scale:
        raise SimulationError(f"equilibrium solve did not converge (residual {res:.3e}: {sol.message})", 0.0)
    theta, thp, vp, dw = unpack(z)
    net = network_solve(theta, V0, X, nqv, load_P, load_Q, grid, (vp, thp))
    return SimState(
        t=0.0,
        theta=tuple(theta),
        omega=tuple([w0 + dw] * n),
        Zv=tuple(u.Zv0 for u in model.units),
        hpf_state=tuple(Pr.tolist()),
        J_eff=tuple(u.J0 for u in model.units),
        D_eff=tuple(u.D0 for u in model.units),
        Vp=net.Vp,
        theta_p=net.theta_p,
        omega_p=w0 + dw,
        P=net.P,
        Q=net.Q,
        Pg=net.Pg,
    )
