"""Rational transfer functions and the small-signal VSG analyses.

Coefficient vectors are stored in *ascending* powers of s, the same order as
:mod:`numpy.polynomial.polynomial`.  Transfer functions are never reduced:
pole/zero pairs that cancel analytically are kept in both polynomials.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .model import GC, SA, NetworkModel, coupling_coefficient


def _trim(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:1] * 0.0


@dataclass(frozen=True, eq=False)
class RationalTF:
    """``num(s)/den(s)`` with real coefficients in ascending powers of s."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not np.any(den):
            raise ZeroDivisionError("denominator polynomial is identically zero")
        lead = den[-1]
        object.__setattr__(self, "num", num / lead)
        object.__setattr__(self, "den", den / lead)

    @classmethod
    def const(cls, k: float) -> "RationalTF":
        return cls(np.array([k], dtype=float), np.array([1.0]))

    @property
    def order(self) -> int:
        return self.den.size - 1

    @property
    def proper(self) -> bool:
        return not np.any(self.num) or self.num.size <= self.den.size

    def __call__(self, s):
        s = np.asarray(s)
        return P.polyval(s, self.num) / P.polyval(s, self.den)

    def dc_gain(self) -> float:
        return float(self.num[0] / self.den[0])

    def __add__(self, other):
        return tf_add(self, _as_tf(other))

    __radd__ = __add__

    def __mul__(self, other):
        return tf_mul(self, _as_tf(other))

    __rmul__ = __mul__

    def __neg__(self):
        return RationalTF(-self.num, self.den)

    def __sub__(self, other):
        return tf_add(self, -_as_tf(other))

    def __repr__(self):
        return f"RationalTF(num={self.num.tolist()}, den={self.den.tolist()})"


def _as_tf(x) -> RationalTF:
    return x if isinstance(x, RationalTF) else RationalTF.const(float(x))


def tf_add(a: RationalTF, b: RationalTF) -> RationalTF:
    if np.array_equal(a.den, b.den):
        return RationalTF(P.polyadd(a.num, b.num), a.den)
    return RationalTF(P.polyadd(P.polymul(a.num, b.den), P.polymul(b.num, a.den)), P.polymul(a.den, b.den))


def tf_mul(a: RationalTF, b: RationalTF) -> RationalTF:
    return RationalTF(P.polymul(a.num, b.num), P.polymul(a.den, b.den))


def tf_feedback(a: RationalTF, b: RationalTF) -> RationalTF:
    """Negative feedback ``a / (1 + a*b)``."""
    num = P.polymul(a.num, b.den)
    den = P.polyadd(P.polymul(a.den, b.den), P.polymul(a.num, b.num))
    return RationalTF(num, den)


# ---------------------------------------------------------------- unit models


def droop_equivalent(mp: float, omega_c: float) -> tuple[float, float]:
    """Inertia and damping ``(J, D)`` equivalent to a droop loop with LPF.

    ``D = 1/mp`` and ``J = D/omega_c``.
    """
    if not (mp > 0 and omega_c > 0):
        raise ValueError("mp and omega_c must be positive")
    D = 1.0 / mp
    return D / omega_c, D


def unit_tf(J: float, D: float, K: float) -> RationalTF:
    """``K/(J s^2 + D s + K)``: PCC-frequency to unit-frequency, and reference to power in a stiff grid."""
    if not (J > 0 and D > 0 and K > 0):
        raise ValueError("J, D and K must be positive")
    return RationalTF([K], [K, D, J])


def unit_power_tf(J: float, D: float, K: float) -> RationalTF:
    """``-K(J s + D)/(J s^2 + D s + K)``: PCC frequency to unit output power."""
    if not (J > 0 and D > 0 and K > 0):
        raise ValueError("J, D and K must be positive")
    return RationalTF([-K * D, -K * J], [K, D, J])


def unit_coefficients(model: NetworkModel) -> np.ndarray:
    """Per-unit K at nominal voltage, branch reactance ``omega0*Lf + Zv0``."""
    w0 = model.omega0
    return np.array([
        coupling_coefficient(u.V0, u.V0, u.Lf_feeder + u.Zv0 / w0, w0) for u in model.units
    ])


def _prod(polys) -> np.ndarray:
    out = np.array([1.0])
    for p in polys:
        out = P.polymul(out, p)
    return out


@dataclass(frozen=True)
class SaTfs:
    dP: list  # per unit dP_i/dP_L
    domega: list  # per unit domega_i/dP_L
    domega_p: RationalTF  # improper: the PCC angle jumps with the load


def sa_load_step_tfs(model: NetworkModel) -> SaTfs:
    """Load-step responses of a stand-alone microgrid.

    ``dP_i/dP_L = G_i(J_i s + D_i) / sum_k G_k(J_k s + D_k)`` with
    ``G_k = K_k/(J_k s^2 + D_k s + K_k)``, assembled over the common
    denominator ``prod_k d_k`` without cancellation.
    """
    if model.n < 1:
        raise ValueError("empty unit list")
    K = unit_coefficients(model)
    J = model.array("J0")
    D = model.array("D0")
    d = [np.array([K[k], D[k], J[k]]) for k in range(model.n)]
    N = [K[k] * np.array([D[k], J[k]]) for k in range(model.n)]
    others = [_prod(d[m] for m in range(model.n) if m != k) for k in range(model.n)]
    den = np.array([0.0])
    for k in range(model.n):
        den = P.polyadd(den, P.polymul(N[k], others[k]))
    dP = [RationalTF(P.polymul(N[i], others[i]), den) for i in range(model.n)]
    domega = [RationalTF(-K[i] * others[i], den) for i in range(model.n)]
    domega_p = RationalTF(-_prod(d), den)
    return SaTfs(dP, domega, domega_p)


@dataclass(frozen=True)
class GcTfs:
    source: int
    domega_p: RationalTF
    dP: list  # per unit dP_i/dP_r,source


def gc_ref_step_tfs(model: NetworkModel, source_unit: str) -> GcTfs:
    """Responses to a power-reference step on ``source_unit`` in grid-connected mode.

    A stiff grid (``Lg == 0``) pins the PCC frequency, so only the source unit
    responds, with its own second-order ``G_s``.
    """
    if model.grid.mode != GC:
        raise ValueError("gc_ref_step_tfs requires a grid-connected model")
    s_idx = model.index(source_unit)
    K = unit_coefficients(model)
    J = model.array("J0")
    D = model.array("D0")
    n = model.n
    zero = RationalTF([0.0], [1.0])
    if model.grid.stiff:
        dP = [zero] * n
        dP[s_idx] = unit_tf(J[s_idx], D[s_idx], K[s_idx])
        return GcTfs(s_idx, zero, dP)

    Kg = coupling_coefficient(model.grid.Vg, model.units[s_idx].V0, model.grid.Lg, model.omega0)
    d = [np.array([K[k], D[k], J[k]]) for k in range(n)]
    N = [K[k] * np.array([D[k], J[k]]) for k in range(n)]
    s = np.array([0.0, 1.0])

    def prod_except(*skip):
        return _prod(d[m] for m in range(n) if m not in skip)

    den = Kg * _prod(d)
    for k in range(n):
        den = P.polyadd(den, P.polymul(s, P.polymul(N[k], prod_except(k))))
    domega_p = RationalTF(K[s_idx] * P.polymul(s, prod_except(s_idx)), den)
    dP = []
    for i in range(n):
        if i == s_idx:
            num = Kg * prod_except(s_idx)
            for k in range(n):
                if k != s_idx:
                    num = P.polyadd(num, P.polymul(s, P.polymul(N[k], prod_except(k, s_idx))))
            dP.append(RationalTF(K[s_idx] * num, den))
        else:
            num = -K[s_idx] * P.polymul(s, P.polymul(N[i], prod_except(i, s_idx)))
            dP.append(RationalTF(num, den))
    return GcTfs(s_idx, domega_p, dP)


# ---------------------------------------------------------------- frequency domain


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    omegas: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray

    def __post_init__(self):
        if not (self.omegas.shape == self.magnitude_db.shape == self.phase_deg.shape):
            raise ValueError("frequency response arrays must have equal length")
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("omegas must be strictly increasing")


def bode(tf: RationalTF, omega_min: float = 0.01, omega_max: float = 1000.0, points: int = 400) -> FrequencyResponse:
    """Magnitude (dB) and unwrapped phase (deg) on a log-spaced grid."""
    if not (0 < omega_min < omega_max) or points < 2:
        raise ValueError("need 0 < omega_min < omega_max and points >= 2")
    w = np.geomspace(omega_min, omega_max, points)
    jw = 1j * w
    den = P.polyval(jw, tf.den)
    bad = np.flatnonzero(den == 0)
    if bad.size:
        raise ZeroDivisionError(f"transfer function has a pole on the imaginary axis at omega={w[bad[0]]!r}")
    H = P.polyval(jw, tf.num) / den
    with np.errstate(divide="ignore"):
        mag = 20.0 * np.log10(np.abs(H))
    phase = np.degrees(np.unwrap(np.angle(H)))
    return FrequencyResponse(w, mag, phase)


@dataclass(frozen=True)
class Pole:
    s: complex
    zeta: float
    omega_n: float


def companion(den) -> np.ndarray:
    """Companion matrix of a polynomial given in ascending order."""
    c = _trim(den)
    n = c.size - 1
    if n < 1:
        raise ValueError("polynomial degree must be at least 1")
    C = np.zeros((n, n))
    C[1:, :-1] = np.eye(n - 1)
    C[:, -1] = -c[:-1] / c[-1]
    return C


def poles(tf: RationalTF, cond_limit: float = 1e10) -> list[Pole]:
    """Denominator roots from companion-matrix eigenvalues, with damping data.

    Emits a RuntimeWarning carrying the eigenvector condition number when it
    exceeds ``cond_limit``.
    """
    C = companion(tf.den)
    vals, vecs = np.linalg.eig(C)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > cond_limit:
        warnings.warn(f"ill-conditioned denominator polynomial (eigenvector condition {cond:.3g})", RuntimeWarning)
    out = []
    for s in sorted(vals, key=lambda z: (z.real, z.imag)):
        s = complex(s)
        wn = abs(s)
        zeta = -s.real / wn if wn > 0 else 1.0
        out.append(Pole(s, zeta, wn))
    return out


@dataclass(frozen=True)
class ResonancePeak:
    omega: float
    peak_db_above_dc: float
    peak_db: float


def resonance_peak(fr: FrequencyResponse, tol_db: float = 1e-6) -> ResonancePeak | None:
    """Interior magnitude maximum, refined by a parabola in log-frequency.

    Returns None ("no interior peak") when the maximum sits on the grid
    boundary or rises less than ``tol_db`` above both end samples.
    """
    m = fr.magnitude_db
    k = int(np.argmax(m))
    if k == 0 or k == m.size - 1 or m[k] - max(m[0], m[-1]) <= tol_db:
        return None
    x = np.log(fr.omegas[k - 1: k + 2])
    y = m[k - 1: k + 2]
    a, b, c = np.polyfit(x - x[1], y, 2)
    if a < 0:
        xv = -b / (2 * a)
        xv = min(max(xv, x[0] - x[1]), x[2] - x[1])
        w_peak = float(np.exp(x[1] + xv))
        m_peak = float(c + b * xv + a * xv * xv)
    else:
        w_peak, m_peak = float(fr.omegas[k]), float(m[k])
    return ResonancePeak(w_peak, m_peak - float(m[0]), m_peak)


# ---------------------------------------------------------------- time domain


def state_space(tf: RationalTF):
    """Controllable canonical realisation ``(A, B, C, D)`` of a proper TF."""
    if not tf.proper:
        raise ValueError("state-space realisation needs a proper transfer function")
    a = tf.den  # monic
    n = a.size - 1
    b = np.zeros(n + 1)
    b[: tf.num.size] = tf.num
    d = b[n]
    bp = b[:n] - d * a[:n]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[:n]
    B = np.zeros(n)
    if n:
        B[-1] = 1.0
    return A, B, bp, d


def step_response(tf: RationalTF, t_end: float, dt: float, amplitude: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Unit-step response via fixed-step RK4 on the canonical realisation.

    Returns ``(t, y)`` sampled every ``dt``.  Unstable transfer functions
    produce a RuntimeWarning but are still simulated.
    """
    A, B, C, D = state_space(tf)
    n_steps = int(round(t_end / dt))
    t = np.arange(n_steps + 1) * dt
    if A.size == 0:
        return t, np.full(t.shape, amplitude * D)
    eig = np.linalg.eigvals(A)
    fastest = float(np.max(np.abs(eig)))
    if fastest * dt >= 0.1:
        raise ValueError(f"dt={dt} does not resolve the fastest pole (|s|={fastest:.4g})")
    if np.any(eig.real > 0):
        warnings.warn("unstable transfer function (pole in the right half plane)", RuntimeWarning)
    # one classical RK4 step of a linear system with held input, in closed form
    I = np.eye(A.shape[0])
    hA = dt * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    M = I + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    Nu = dt * (I + hA / 2 + hA2 / 6 + hA3 / 24) @ B * amplitude
    x = np.zeros(A.shape[0])
    y = np.empty(t.size)
    for k in range(t.size):
        y[k] = C @ x + D * amplitude
        x = M @ x + Nu
    return t, y


def second_order_overshoot(zeta: float) -> float:
    return math.exp(-math.pi * zeta / math.sqrt(1.0 - zeta * zeta))
