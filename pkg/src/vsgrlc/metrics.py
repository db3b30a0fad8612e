"""Scalar summaries of a recorded trajectory.

Everything here is a pure function of the CSV columns (plus the model for the
capacity weights and the communication Laplacian), so re-reading a saved CSV
reproduces the report bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .engine import TimeSeries
from .model import CommGraph, NetworkModel

SETTLING_BAND = 0.02
ROCOF_WINDOW = 0.02


@dataclass(frozen=True)
class SignalMetrics:
    initial: float
    steady_state_value: float
    overshoot_pct: float
    settling_time_s: float | None  # None: not settled inside the window
    peak_to_peak: float
    damping_estimate: float | None  # None: fewer than two usable extrema


@dataclass(frozen=True)
class MetricsReport:
    t_event: float
    signals: dict
    rocof_max_rad_s2: float
    sharing_error_pct: float
    max_omega_p_dev_rad_s: float
    lyapunov_final: float
    power_balance_max_W: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["signals"] = {k: asdict(v) for k, v in self.signals.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def log_decrement_damping(t, x, final: float | None = None, rel_floor: float = 1e-3) -> float | None:
    """Damping ratio from the decay of successive same-sign extrema of ``x - final``.

    Uses ``delta = ln(a_k / a_{k+1})`` averaged over the first few full
    periods and ``zeta = delta / sqrt(4 pi^2 + delta^2)``.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 5:
        return None
    e = x - (x[-1] if final is None else final)
    d = np.diff(e)
    idx = [i + 1 for i in range(d.size - 1) if d[i] * d[i + 1] < 0 or (d[i] != 0 and d[i + 1] == 0)]
    if not idx:
        return None
    amps = np.abs(e[idx])
    keep = amps > rel_floor * amps.max()
    idx = [i for i, k in zip(idx, keep) if k]
    peaks = [e[i] for i in idx if e[i] > 0]
    if len(peaks) < 2:
        peaks = [-e[i] for i in idx if e[i] < 0]
    if len(peaks) < 2:
        return None
    peaks = peaks[:6]
    deltas = [math.log(a / b) for a, b in zip(peaks, peaks[1:]) if a > 0 and b > 0]
    if not deltas:
        return None
    delta = float(np.mean(deltas))
    return delta / math.sqrt(4.0 * math.pi ** 2 + delta * delta)


def signal_metrics(t, x, t_event: float = 0.0) -> SignalMetrics:
    """Step-response figures for ``x`` after ``t_event``.

    The pre-event level is the last sample before ``t_event`` (the first
    sample if there is none); the terminal value is the last sample.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    win = t >= t_event - 1e-12
    if not win.any():
        raise ValueError("no samples after the event time")
    before = np.flatnonzero(~win)
    x0 = float(x[before[-1]]) if before.size else float(x[0])
    tw, xw = t[win], x[win]
    final = float(xw[-1])
    step = final - x0
    pp = float(xw.max() - xw.min())
    if step == 0.0:
        return SignalMetrics(x0, final, 0.0, 0.0, pp, None)
    # excursion beyond the terminal value, in the direction of the step
    beyond = (xw - final) * math.copysign(1.0, step)
    overshoot = max(0.0, float(beyond.max())) / abs(step) * 100.0
    band = SETTLING_BAND * abs(step)
    out = np.flatnonzero(np.abs(xw - final) > band)
    if out.size == 0:
        settling = 0.0
    elif out[-1] >= int(0.9 * (xw.size - 1)):
        settling = None
    else:
        settling = float(tw[out[-1] + 1] - t_event)
    return SignalMetrics(x0, final, overshoot, settling, pp, log_decrement_damping(tw, xw, final))


def rocof_max(t, omega, window: float = ROCOF_WINDOW) -> float:
    """Largest ``|omega(t + window) - omega(t)| / window`` over the record."""
    t = np.asarray(t, dtype=float)
    w = np.asarray(omega, dtype=float)
    if t.size < 2:
        return 0.0
    step = float(np.median(np.diff(t)))
    k = max(1, int(round(window / step)))
    if k >= t.size:
        k = t.size - 1
    return float(np.max(np.abs(w[k:] - w[:-k]) / (t[k:] - t[:-k])))


def sharing_error_pct(P, Pm) -> float:
    """Worst deviation of terminal shares from capacity shares, in percent of the capacity share."""
    P = np.asarray(P, dtype=float)
    Pm = np.asarray(Pm, dtype=float)
    total = P.sum()
    if P.size < 2 or abs(total) < 1e-9:
        return 0.0
    want = Pm / Pm.sum()
    return float(np.max(np.abs(P / total - want) / want) * 100.0)


def last_disturbance_time(series: TimeSeries, default: float = 0.0) -> float:
    ts = [e.t for e in series.events if e.kind in ("set_load", "set_pref")]
    return max(ts) if ts else default


def extract_metrics(series: TimeSeries, model: NetworkModel, graph: CommGraph | None = None,
                    t_event: float | None = None) -> MetricsReport:
    """Summarise ``series`` from ``t_event`` (default: last load or reference step) onwards."""
    if series.data.shape[0] == 0:
        raise ValueError("empty time series")
    if t_event is None:
        t_event = last_disturbance_time(series)
    t = series.t
    signals = {}
    for i in range(series.n_units):
        for q in ("P_W", "omega_rad_s"):
            signals[f"unit{i + 1}_{q}"] = signal_metrics(t, series.unit(i, q), t_event)
    signals["omega_p_rad_s"] = signal_metrics(t, series["omega_p_rad_s"], t_event)
    if model.grid.mode == "GC":
        signals["pg_W"] = signal_metrics(t, series["pg_W"], t_event)
    win = t >= t_event - 1e-12
    rocof = max(rocof_max(t[win], series.unit(i, "omega_rad_s")[win]) for i in range(series.n_units))
    P_end = series.stack("P_W")[-1]
    nq = model.array("nq")
    L = (graph if graph is not None else CommGraph.complete(model.n)).L
    x = nq * series.stack("Q_var")[-1]
    nu = 0.5 * float(x @ L @ x)
    pbal = series.stack("P_W").sum(axis=1) + series["pg_W"]
    return MetricsReport(
        t_event=float(t_event),
        signals=signals,
        rocof_max_rad_s2=rocof,
        sharing_error_pct=sharing_error_pct(P_end, model.array("Pm")),
        max_omega_p_dev_rad_s=float(np.max(np.abs(series["omega_p_rad_s"][win] - model.omega0))),
        lyapunov_final=nu,
        power_balance_max_W=float(np.max(np.abs(pbal - _load_trace(series, model)))),
    )


def _load_trace(series: TimeSeries, model: NetworkModel) -> np.ndarray:
    """Active load at each recorded sample (events act at the first boundary at or after their time)."""
    t = series.t
    load = np.full(t.shape, model.load_P)
    for e in sorted((e for e in series.events if e.kind == "set_load"), key=lambda e: e.t):
        load[t >= e.t - 1e-9] = e.P
    return load
