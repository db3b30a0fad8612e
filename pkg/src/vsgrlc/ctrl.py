"""Controller laws evaluated by the engine.

Each controller is described by a frozen parameter record (parsed from the
``controllers`` list of a config) plus pure functions that the engine calls
with the current sampled signals.  Controller *state* (virtual-reactance
integrators, filter states, received messages) lives in the engine's state
vector or in :class:`CommChannel`, never in these records.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import ClassVar

import numpy as np


def _positive(**kw):
    for name, value in kw.items():
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class HpfParams:
    """High-pass feedforward ``mu*s/(tau*s + 1)``."""

    mu: float = 0.1
    tau: float = 0.1

    def __post_init__(self):
        _positive(mu=self.mu, tau=self.tau)

    @property
    def hf_gain(self) -> float:
        return self.mu / self.tau


@dataclass(frozen=True)
class _Base:
    kind: ClassVar[str] = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class DviParams(_Base):
    k_v: float = 0.01
    sign: int = 1
    # X_total may not fall below floor_frac * omega0 * Lf
    floor_frac: float = 0.1
    enabled: bool = True
    kind: ClassVar[str] = "dvi"

    def __post_init__(self):
        _positive(k_v=self.k_v)
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not 0 < self.floor_frac < 1:
            raise ValueError("floor_frac must lie in (0, 1)")


@dataclass(frozen=True)
class DscParams(_Base):
    k_dsc: float = 1000.0
    enabled: bool = True
    kind: ClassVar[str] = "dsc"

    def __post_init__(self):
        _positive(k_dsc=self.k_dsc)


@dataclass(frozen=True)
class AdaptiveInertiaParams(_Base):
    mu: float = 0.1
    tau: float = 0.1
    j_min_frac: float = 0.01
    # "momentum": d(J*dw)/dt = torque;  "coefficient": J(t)*d(dw)/dt = torque
    form: str = "momentum"
    enabled: bool = True
    kind: ClassVar[str] = "adaptive_inertia"

    def __post_init__(self):
        _positive(mu=self.mu, tau=self.tau)
        if not 0 < self.j_min_frac < 1:
            raise ValueError("j_min_frac must lie in (0, 1)")
        if self.form not in ("momentum", "coefficient"):
            raise ValueError("form must be 'momentum' or 'coefficient'")

    @property
    def hpf(self) -> HpfParams:
        return HpfParams(self.mu, self.tau)


@dataclass(frozen=True)
class AdaptiveDampingParams(_Base):
    mu: float = 0.1
    tau: float = 0.1
    enabled: bool = True
    kind: ClassVar[str] = "adaptive_damping"

    def __post_init__(self):
        _positive(mu=self.mu, tau=self.tau)

    @property
    def hpf(self) -> HpfParams:
        return HpfParams(self.mu, self.tau)


ControllerParams = DviParams | DscParams | AdaptiveInertiaParams | AdaptiveDampingParams

CONTROLLER_KINDS = ("dvi", "dsc", "adaptive_inertia", "adaptive_damping")


# ---------------------------------------------------------------- laws


def traditional_vsg(J0: float, D0: float) -> tuple[float, float, float]:
    """Fixed-coefficient VSG: ``(J_eff, D_eff, dZv/dt)``."""
    return J0, D0, 0.0


def dvi_rates(x_own, x_rx, adjacency, k_v, sign: int = 1) -> np.ndarray:
    """Virtual-reactance rates ``sign*k_v*sum_j a_ij (x_i - x_j)`` in ohm/s.

    ``x_own[i]`` is unit i's own weighted reactive power sample and
    ``x_rx[i, j]`` the latest value unit i received from neighbour j.  With a
    1-D ``x_rx`` every unit is assumed to see the same vector.
    """
    x_own = np.asarray(x_own, dtype=float)
    A = np.asarray(adjacency, dtype=float)
    x_rx = np.asarray(x_rx, dtype=float)
    if x_rx.ndim == 1:
        x_rx = np.broadcast_to(x_rx, A.shape)
    k_v = np.broadcast_to(np.asarray(k_v, dtype=float), x_own.shape)
    return sign * k_v * (A * (x_own[:, None] - x_rx)).sum(axis=1)


def clamp_zv(zv, x_fixed, x_floor) -> np.ndarray:
    """Keep ``x_fixed + zv >= x_floor`` element-wise."""
    return np.maximum(np.asarray(zv, dtype=float), np.asarray(x_floor) - np.asarray(x_fixed))


def lyapunov_v(x, L) -> float:
    """Consensus disagreement ``0.5 * x^T L x``."""
    x = np.asarray(x, dtype=float)
    L = np.asarray(L, dtype=float)
    if L.shape != (x.size, x.size):
        raise ValueError(f"dimension mismatch: x has {x.size} entries, L is {L.shape}")
    return 0.5 * float(x @ L @ x)


def hpf_output(hpf: HpfParams, u, z):
    """Output of the high-pass filter given input ``u`` and lag state ``z``.

    Realisation: ``dz/dt = (u - z)/tau``, ``y = (mu/tau)(u - z)``.  A constant
    input held at ``z == u`` yields exactly zero.
    """
    return hpf.hf_gain * (np.asarray(u) - np.asarray(z))


def hpf_state_derivative(hpf: HpfParams, u, z):
    return (np.asarray(u) - np.asarray(z)) / hpf.tau


def hpf_response(hpf: HpfParams, u, dt: float, z0: float | None = None) -> np.ndarray:
    """Filter a sampled piecewise-constant signal (exact zero-order-hold update)."""
    u = np.asarray(u, dtype=float)
    z = float(u[0]) if z0 is None else float(z0)
    decay = math.exp(-dt / hpf.tau)
    y = np.empty_like(u)
    for k, uk in enumerate(u):
        y[k] = hpf.hf_gain * (uk - z)
        z = uk + (z - uk) * decay
    return y


def adaptive_inertia_law(y, J0, j_min_frac: float):
    """``J_eff = max(J0 - |y|, j_min_frac*J0)``."""
    J0 = np.asarray(J0, dtype=float)
    return np.maximum(J0 - np.abs(y), j_min_frac * J0)


def adaptive_damping_law(y, D0):
    """``D_eff = D0 + |y|``."""
    return np.asarray(D0, dtype=float) + np.abs(y)


def adaptive_inertia(hpf: HpfParams, pr_signal, J0: float, j_min_frac: float, dt: float,
                     pr_initial: float | None = None) -> np.ndarray:
    """Effective inertia trajectory for a sampled power-reference signal.

    The filter starts settled at ``pr_initial`` (default: first sample).
    """
    y = hpf_response(hpf, pr_signal, dt, pr_initial)
    return adaptive_inertia_law(y, J0, j_min_frac)


def adaptive_damping(hpf: HpfParams, pr_signal, D0: float, dt: float,
                     pr_initial: float | None = None) -> np.ndarray:
    y = hpf_response(hpf, pr_signal, dt, pr_initial)
    return adaptive_damping_law(y, D0)


def dsc_term(adjacency, omegas, k_dsc: float) -> np.ndarray:
    """Mutual-damping torque ``k_dsc * sum_j a_ij (w_j - w_i)`` per unit (W).

    ``omegas`` may be a vector (everyone sees the same samples) or an n x n
    matrix whose row i holds unit i's received samples (its own value on the
    diagonal).
    """
    A = np.asarray(adjacency, dtype=float)
    w = np.asarray(omegas, dtype=float)
    if w.ndim == 1:
        return k_dsc * (A @ w - A.sum(axis=1) * w)
    own = np.diag(w)
    return k_dsc * (A * (w - own[:, None])).sum(axis=1)


class CommChannel:
    """Synchronous sampled message exchange with delay and dropouts.

    Every ``sample_period`` each unit broadcasts a vector of values.  A message
    sent at tick k is delivered at tick ``k + delay_samples`` unless the
    delivery instant lies in a fault window or the channel is switched off;
    receivers hold the freshest delivered value.  ``tick`` returns whether any
    fresh message arrived at this instant (``alive``).
    """

    def __init__(self, adjacency, delay_samples: int = 0, fault_windows=()):
        self.A = np.asarray(adjacency, dtype=float)
        self.n = self.A.shape[0]
        self.delay_samples = int(delay_samples)
        self.fault_windows = tuple(fault_windows)
        self.lost = False
        self._pending: list = []
        self.rx: np.ndarray | None = None
        self.alive = False

    def in_fault(self, t: float) -> bool:
        return self.lost or any(t0 <= t < t1 for t0, t1 in self.fault_windows)

    def tick(self, t: float, values) -> bool:
        values = np.array(values, dtype=float)
        self._pending.append(values)
        if len(self._pending) <= self.delay_samples:
            self.alive = False
            return False
        sent = self._pending.pop(0)
        if self.in_fault(t):
            self.alive = False
            return False
        self.rx = sent
        self.alive = True
        return True

    def received(self, own) -> np.ndarray:
        """n x n matrix: row i = values seen by unit i (own value on the diagonal)."""
        own = np.asarray(own, dtype=float)
        rx = np.broadcast_to(self.rx if self.rx is not None else own, (self.n, self.n)).copy()
        rx[np.diag_indices(self.n)] = own
        return rx
