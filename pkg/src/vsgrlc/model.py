"""Domain types, JSON configuration and the communication graph.

Everything here is immutable after loading.  Units follow the config field
names: inductances are stored in henry, powers in W/var, angles in rad.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Any, Sequence

import numpy as np

from .ctrl import (
    AdaptiveDampingParams,
    AdaptiveInertiaParams,
    ControllerParams,
    DscParams,
    DviParams,
)

SA = "SA"
GC = "GC"


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration documents."""


@dataclass(frozen=True)
class UnitParams:
    id: str
    J0: float
    D0: float
    Pm: float
    nq: float
    Lf_feeder: float
    V0: float
    Pr: float = 0.0
    Zv0: float = 0.0

    def __post_init__(self):
        for name in ("J0", "D0", "Pm", "Lf_feeder", "nq", "V0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive (unit {self.id!r}, got {value!r})")
        if not math.isfinite(self.Pr):
            raise ConfigError(f"Pr must be finite (unit {self.id!r})")
        if not math.isfinite(self.Zv0):
            raise ConfigError(f"Zv0 must be finite (unit {self.id!r})")


@dataclass(frozen=True)
class GridLink:
    mode: str = SA
    Lg: float = 0.0
    Vg: float = 190.0
    omega_g: float = 314.0

    def __post_init__(self):
        if self.mode not in (SA, GC):
            raise ConfigError(f"mode must be 'SA' or 'GC', got {self.mode!r}")
        if not (math.isfinite(self.Lg) and self.Lg >= 0):
            raise ConfigError("Lg must be non-negative")
        if not (self.Vg > 0 and self.omega_g > 0):
            raise ConfigError("Vg and omega_g must be positive")

    @property
    def stiff(self) -> bool:
        return self.Lg == 0.0


@dataclass(frozen=True)
class NetworkModel:
    units: tuple[UnitParams, ...]
    grid: GridLink
    omega0: float = 314.0
    load_P: float = 0.0
    load_Q: float = 0.0
    # Q-V droop slope applied to the weighted reactive power nq*Q (V per var)
    qv_droop: float = 0.001

    def __post_init__(self):
        if len(self.units) < 1:
            raise ConfigError("model needs at least one unit")
        if not (math.isfinite(self.omega0) and self.omega0 > 0):
            raise ConfigError("omega0 must be positive")
        if not (math.isfinite(self.load_P) and math.isfinite(self.load_Q)):
            raise ConfigError("load_P and load_Q must be finite")
        if not (math.isfinite(self.qv_droop) and self.qv_droop >= 0):
            raise ConfigError("qv_droop must be non-negative")
        ids = [u.id for u in self.units]
        if len(set(ids)) != len(ids):
            raise ConfigError("unit ids must be unique")

    @property
    def n(self) -> int:
        return len(self.units)

    def index(self, unit_id: str) -> int:
        for i, u in enumerate(self.units):
            if u.id == unit_id:
                return i
        raise KeyError(f"unknown unit id {unit_id!r}")

    def array(self, name: str) -> np.ndarray:
        return np.array([getattr(u, name) for u in self.units], dtype=float)


def laplacian(adjacency) -> np.ndarray:
    """Graph Laplacian ``diag(degree) - A`` of an undirected 0/1 adjacency."""
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("adjacency must be square")
    if not np.array_equal(A, A.T):
        raise ConfigError("adjacency must be symmetric")
    if np.any(np.diag(A) != 0):
        raise ConfigError("adjacency must have a zero diagonal")
    return np.diag(A.sum(axis=1)) - A


def algebraic_connectivity(L) -> float:
    """Second-smallest eigenvalue of a Laplacian (0 for a single node)."""
    w = np.linalg.eigvalsh(np.asarray(L, dtype=float))
    if w.size < 2:
        return 0.0
    lam2 = float(w[1])
    # eigvalsh returns ~1e-16 noise for exact zeros
    return 0.0 if abs(lam2) < 1e-12 * max(1.0, float(np.abs(w).max())) else lam2


def coupling_coefficient(Vi: float, Vp: float, L_line: float, omega0: float) -> float:
    """Synchronizing coefficient K = Vi*Vp/(omega0*L) of an inductive feeder (W/rad)."""
    if not L_line > 0:
        raise ValueError("line inductance must be positive")
    if not omega0 > 0:
        raise ValueError("omega0 must be positive")
    return Vi * Vp / (omega0 * L_line)


@dataclass(frozen=True)
class CommGraph:
    adjacency: tuple[tuple[int, ...], ...]
    sample_period: float = 0.01
    delay: float = 0.0
    fault_windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        if A.size and not np.all((A == 0) | (A == 1)):
            raise ConfigError("adjacency entries must be 0 or 1")
        laplacian(A if A.size else np.zeros((0, 0)))
        if not self.sample_period > 0:
            raise ConfigError("sample_period must be positive")
        if self.delay < 0:
            raise ConfigError("delay must be non-negative")
        ratio = self.delay / self.sample_period
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("delay must be an integer multiple of sample_period")
        for t0, t1 in self.fault_windows:
            if not t1 >= t0:
                raise ConfigError("fault window end must not precede its start")

    @property
    def n(self) -> int:
        return len(self.adjacency)

    @property
    def A(self) -> np.ndarray:
        return np.asarray(self.adjacency, dtype=float).reshape(self.n, self.n)

    @property
    def L(self) -> np.ndarray:
        return laplacian(self.A)

    @property
    def lambda2(self) -> float:
        return algebraic_connectivity(self.L)

    @property
    def delay_samples(self) -> int:
        return int(round(self.delay / self.sample_period))

    def in_fault(self, t: float) -> bool:
        return any(t0 <= t < t1 for t0, t1 in self.fault_windows)

    @classmethod
    def complete(cls, n: int, **kw) -> "CommGraph":
        adj = tuple(tuple(int(i != j) for j in range(n)) for i in range(n))
        return cls(adj, **kw)


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class SetLoad:
    t: float
    P: float
    Q: float = 0.0
    kind = "set_load"


@dataclass(frozen=True)
class SetPref:
    t: float
    unit: str
    P: float
    kind = "set_pref"


@dataclass(frozen=True)
class EnableController:
    t: float
    name: str
    kind = "enable_controller"


@dataclass(frozen=True)
class DisableController:
    t: float
    name: str
    kind = "disable_controller"


@dataclass(frozen=True)
class CommLoss:
    t: float
    on: bool
    kind = "comm_loss"


@dataclass(frozen=True)
class GridConnect:
    t: float
    on: bool
    kind = "grid_connect"


Event = SetLoad | SetPref | EnableController | DisableController | CommLoss | GridConnect

DISTURBANCES = (SetLoad, SetPref)


@dataclass(frozen=True)
class Scenario:
    t_end: float = 20.0
    dt: float = 0.001
    events: tuple = ()
    controllers: tuple[ControllerParams, ...] = ()
    output_stride: int = 10

    def __post_init__(self):
        if not (0 < self.dt < self.t_end):
            raise ConfigError("scenario requires 0 < dt < t_end")
        if self.output_stride < 1:
            raise ConfigError("output_stride must be >= 1")
        times = [e.t for e in self.events]
        if times != sorted(times):
            raise ConfigError("events must be sorted by time")
        for e in self.events:
            if not 0 <= e.t <= self.t_end:
                raise ConfigError(f"event time {e.t} outside [0, t_end]")
        kinds = [c.kind for c in self.controllers]
        if len(set(kinds)) != len(kinds):
            raise ConfigError("each controller kind may appear only once")

    def controller(self, kind: str):
        for c in self.controllers:
            if c.kind == kind:
                return c
        return None


# ---------------------------------------------------------------- JSON


def _milli(value: float) -> float:
    return value / 1000.0


def _to_milli(x: float) -> float:
    """Inverse of :func:`_milli` that survives a dump/load round trip exactly."""
    m = x * 1000.0
    for _ in range(8):
        back = m / 1000.0
        if back == x:
            break
        m = math.nextafter(m, math.inf if back < x else -math.inf)
    return m


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing field {key!r} in {where}")
    return d[key]


def _num(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


_CONTROLLER_TYPES = {
    "dvi": DviParams,
    "dsc": DscParams,
    "adaptive_inertia": AdaptiveInertiaParams,
    "adaptive_damping": AdaptiveDampingParams,
}


def _parse_controller(d: dict) -> ControllerParams:
    kind = _require(d, "kind", "controller")
    if kind == "traditional":
        return None
    try:
        cls = _CONTROLLER_TYPES[kind]
    except KeyError:
        raise ConfigError(f"unknown controller kind {kind!r}") from None
    names = {f.name for f in fields(cls)}
    extra = set(d) - names - {"kind"}
    if extra:
        raise ConfigError(f"unknown field(s) {sorted(extra)} for controller {kind!r}")
    kw = {k: v for k, v in d.items() if k != "kind"}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"controller {kind!r}: {exc}") from None


def _parse_event(d: dict):
    t = _num(_require(d, "t_s", "event"), "t_s")
    kind = _require(d, "kind", "event")
    if kind == "set_load":
        return SetLoad(t, _num(_require(d, "p_W", "set_load"), "p_W"), _num(d.get("q_var", 0.0), "q_var"))
    if kind == "set_pref":
        return SetPref(t, str(_require(d, "unit", "set_pref")), _num(_require(d, "p_W", "set_pref"), "p_W"))
    if kind == "enable_controller":
        return EnableController(t, str(_require(d, "name", kind)))
    if kind == "disable_controller":
        return DisableController(t, str(_require(d, "name", kind)))
    if kind == "comm_loss":
        return CommLoss(t, bool(d.get("on", True)))
    if kind == "grid_connect":
        return GridConnect(t, bool(d.get("on", True)))
    raise ConfigError(f"unknown event kind {kind!r}")


def parse_config(doc: dict) -> tuple[NetworkModel, CommGraph, Scenario]:
    """Build validated objects from an already-decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    omega0 = _num(doc.get("omega0_rad_s", 314.0), "omega0_rad_s")
    v0 = _num(doc.get("v0_V", 190.0), "v0_V")
    mode = doc.get("mode", SA)
    g = doc.get("grid", {}) or {}
    grid = GridLink(
        mode=mode,
        Lg=_milli(_num(g.get("lg_mH", 0.0), "lg_mH")),
        Vg=_num(g.get("vg_V", v0), "vg_V"),
        omega_g=_num(g.get("omega_g_rad_s", omega0), "omega_g_rad_s"),
    )
    raw_units = _require(doc, "units", "config")
    if not isinstance(raw_units, list) or not raw_units:
        raise ConfigError("model needs at least one unit")
    pms = [_num(_require(u, "pm_W", "unit"), "pm_W") for u in raw_units]
    pm_min = min(pms) if min(pms) > 0 else 1.0
    units = []
    for k, (u, pm) in enumerate(zip(raw_units, pms)):
        units.append(UnitParams(
            id=str(u.get("id", f"u{k + 1}")),
            J0=_num(_require(u, "j0", "unit"), "j0"),
            D0=_num(_require(u, "d0", "unit"), "d0"),
            Pm=pm,
            # weights proportional to 1/Pm, normalised so the smallest unit has weight 1
            nq=_num(u["nq"], "nq") if "nq" in u else pm_min / pm,
            Lf_feeder=_milli(_num(_require(u, "feeder_mH", "unit"), "feeder_mH")),
            V0=_num(u.get("v0_V", v0), "v0_V"),
            Pr=_num(u.get("pr_W", 0.0), "pr_W"),
            Zv0=_num(u.get("zv0_ohm", 0.0), "zv0_ohm"),
        ))
    load = doc.get("load", {}) or {}
    model = NetworkModel(
        units=tuple(units),
        grid=grid,
        omega0=omega0,
        load_P=_num(load.get("p_W", 0.0), "load.p_W"),
        load_Q=_num(load.get("q_var", 0.0), "load.q_var"),
        qv_droop=_num(doc.get("qv_droop_V_per_var", 0.001), "qv_droop_V_per_var"),
    )

    c = doc.get("comm")
    if c is None:
        graph = CommGraph.complete(model.n)
    else:
        adj = c.get("adjacency")
        if adj is None:
            adjacency = CommGraph.complete(model.n).adjacency
        else:
            if not (isinstance(adj, list) and all(isinstance(r, list) for r in adj)):
                raise ConfigError("adjacency must be a list of rows")
            if len(adj) != model.n or any(len(r) != model.n for r in adj):
                raise ConfigError(f"adjacency must be {model.n}x{model.n}")
            adjacency = tuple(tuple(int(_num(v, "adjacency entry")) for v in r) for r in adj)
        graph = CommGraph(
            adjacency=adjacency,
            sample_period=_milli(_num(c.get("sample_ms", 10.0), "sample_ms")),
            delay=_milli(_num(c.get("delay_ms", 0.0), "delay_ms")),
            fault_windows=tuple(
                (_num(w[0], "fault window"), _num(w[1], "fault window"))
                for w in c.get("fault_windows_s", [])
            ),
        )

    s = _require(doc, "scenario", "config")
    ctrls = tuple(p for p in (_parse_controller(d) for d in doc.get("controllers", [])) if p is not None)
    scenario = Scenario(
        t_end=_num(_require(s, "t_end_s", "scenario"), "t_end_s"),
        dt=_num(s.get("dt_s", 0.001), "dt_s"),
        events=tuple(_parse_event(e) for e in s.get("events", [])),
        controllers=ctrls,
        output_stride=int(s.get("output_stride", 10)),
    )
    for e in scenario.events:
        if isinstance(e, SetPref):
            try:
                model.index(e.unit)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        if isinstance(e, (EnableController, DisableController)):
            if e.name not in _CONTROLLER_TYPES or scenario.controller(e.name) is None:
                raise ConfigError(f"event refers to unconfigured controller {e.name!r}")
    return model, graph, scenario


def load_model(config_text: str) -> tuple[NetworkModel, CommGraph, Scenario]:
    """Parse and validate a JSON config document.

    Raises ConfigError with line/column context on malformed JSON, or with the
    name of the violated invariant when a value is out of range.
    """
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        lines = config_text.splitlines()
        src = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}\n  {src}") from None
    return parse_config(doc)


def load_model_file(path) -> tuple[NetworkModel, CommGraph, Scenario]:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def _event_dict(e) -> dict[str, Any]:
    d: dict[str, Any] = {"t_s": e.t, "kind": e.kind}
    if isinstance(e, SetLoad):
        d.update(p_W=e.P, q_var=e.Q)
    elif isinstance(e, SetPref):
        d.update(unit=e.unit, p_W=e.P)
    elif isinstance(e, (EnableController, DisableController)):
        d["name"] = e.name
    else:
        d["on"] = e.on
    return d


def config_dict(model: NetworkModel, graph: CommGraph, scenario: Scenario) -> dict[str, Any]:
    """Inverse of :func:`parse_config`."""
    return {
        "omega0_rad_s": model.omega0,
        "v0_V": model.units[0].V0,
        "mode": model.grid.mode,
        "qv_droop_V_per_var": model.qv_droop,
        "grid": {"lg_mH": _to_milli(model.grid.Lg), "vg_V": model.grid.Vg, "omega_g_rad_s": model.grid.omega_g},
        "load": {"p_W": model.load_P, "q_var": model.load_Q},
        "units": [
            {
                "id": u.id, "j0": u.J0, "d0": u.D0, "pm_W": u.Pm, "nq": u.nq,
                "feeder_mH": _to_milli(u.Lf_feeder), "v0_V": u.V0, "zv0_ohm": u.Zv0, "pr_W": u.Pr,
            }
            for u in model.units
        ],
        "comm": {
            "adjacency": [list(r) for r in graph.adjacency],
            "sample_ms": _to_milli(graph.sample_period),
            "delay_ms": _to_milli(graph.delay),
            "fault_windows_s": [list(w) for w in graph.fault_windows],
        },
        "controllers": [c.to_dict() for c in scenario.controllers],
        "scenario": {
            "t_end_s": scenario.t_end,
            "dt_s": scenario.dt,
            "output_stride": scenario.output_stride,
            "events": [_event_dict(e) for e in scenario.events],
        },
    }


def dump_model(model: NetworkModel, graph: CommGraph, scenario: Scenario) -> str:
    return json.dumps(config_dict(model, graph, scenario), indent=2)


def with_zv0(model: NetworkModel, zv0: Sequence[float]) -> NetworkModel:
    """Copy of ``model`` with per-unit fixed virtual reactance replaced."""
    from dataclasses import replace

    units = tuple(replace(u, Zv0=float(z)) for u, z in zip(model.units, zv0, strict=True))
    return replace(model, units=units)
