"""RLC equivalent-circuit view of paralleled VSG units.

Frequency deviation plays the role of voltage and power the role of current:
inertia J is a capacitance, 1/D a resistance and 1/K (the feeder's
synchronising coefficient) an inductance.  Units whose (J, D, K) are all in
proportion share transients exactly in that proportion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import NetworkModel, UnitParams, coupling_coefficient


@dataclass(frozen=True)
class BranchRLC:
    C: float
    R: float
    L: float

    def __post_init__(self):
        for name in ("C", "R", "L"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")

    @property
    def J(self) -> float:
        return self.C

    @property
    def D(self) -> float:
        return 1.0 / self.R

    @property
    def K(self) -> float:
        return 1.0 / self.L


def branch_reactance(u: UnitParams, omega0: float, zv: float = 0.0) -> float:
    """Total series reactance ``omega0*Lf + Zv0 + zv`` in ohm."""
    return omega0 * u.Lf_feeder + u.Zv0 + zv


def to_equivalent_circuit(u: UnitParams, omega0: float, V0: float | None = None, zv: float = 0.0) -> BranchRLC:
    """Map a unit to its (C, R, L) branch.

    K uses the full branch reactance, so a virtual reactance retunes L.
    """
    V = u.V0 if V0 is None else V0
    X = branch_reactance(u, omega0, zv)
    K = coupling_coefficient(V, V, X / omega0, omega0)
    return BranchRLC(C=u.J0, R=1.0 / u.D0, L=1.0 / K)


def from_equivalent_circuit(b: BranchRLC) -> tuple[float, float, float]:
    """Inverse map: ``(J, D, K)``."""
    return b.J, b.D, b.K


def rlc_from_coefficients(J: float, D: float, K: float) -> BranchRLC:
    return BranchRLC(C=J, R=1.0 / D, L=1.0 / K)


def branch_impedance(b: BranchRLC, omega):
    """``Z_e = 1/(jwC + 1/R) + jwL``; accepts scalars or arrays."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("omega must be non-negative")
    jw = 1j * w
    z = 1.0 / (b.C * jw + 1.0 / b.R) + jw * b.L
    return complex(z) if z.ndim == 0 else z


def coefficient_ratios(model: NetworkModel, zv=None) -> np.ndarray:
    """Rows ``(J_i/J_1, D_i/D_1, K_i/K_1)`` for every unit."""
    zv = np.zeros(model.n) if zv is None else np.asarray(zv, dtype=float)
    bs = [to_equivalent_circuit(u, model.omega0, zv=z) for u, z in zip(model.units, zv)]
    J = np.array([b.J for b in bs])
    D = np.array([b.D for b in bs])
    K = np.array([b.K for b in bs])
    return np.column_stack([J / J[0], D / D[0], K / K[0]])


def proportionality_residual(model: NetworkModel, zv=None) -> float:
    """Largest normalised disagreement between the J, D and K ratios.

    Zero exactly when every unit's (J, D, K) is a common multiple of unit 1's.
    A single unit has no pairs and scores zero.
    """
    if model.n < 2:
        return 0.0
    r = coefficient_ratios(model, zv)
    u, v, w = r[:, 0], r[:, 1], r[:, 2]
    dev = np.maximum.reduce([np.abs(u - v), np.abs(u - w), np.abs(v - w)]) / u
    return float(dev.max())


@dataclass(frozen=True)
class ReactanceSuggestion:
    """Added virtual reactance per unit that makes K proportional to J."""

    current_X: tuple
    target_X: tuple
    added_Zv: tuple

    @property
    def needed(self) -> bool:
        return any(z > 0 for z in self.added_Zv)


def suggest_virtual_reactance(model: NetworkModel, rtol: float = 1e-12) -> ReactanceSuggestion:
    """Smallest uniform-scale reactance targets with ``X_i`` proportional to ``J_1/J_i``.

    Targets are ``c*J_1/J_i`` with the least ``c`` that keeps every
    increment non-negative, so no branch falls below its present reactance.
    """
    w0 = model.omega0
    X = np.array([branch_reactance(u, w0) for u in model.units])
    J = model.array("J0")
    shape = J[0] / J
    c = float(np.max(X / shape))
    target = c * shape
    added = target - X
    added[np.abs(added) <= rtol * target] = 0.0
    return ReactanceSuggestion(tuple(X.tolist()), tuple(target.tolist()), tuple(np.maximum(added, 0.0).tolist()))


# ---------------------------------------------------------------- design guideline


@dataclass(frozen=True)
class DesignInputs:
    """Inputs of the parameter-design calculator.

    The consensus gain needs ``rho`` plus either the three factors
    ``nq, lambda2, H0_mag`` or their product ``nq_l2_h0``; without them only
    the inertia, damping and filter rows are produced.
    """

    dP_max: float
    rocof_max: float
    dw_max: float
    k_HP: float = 10.0
    rho: float | None = None
    nq: float | None = None
    lambda2: float | None = None
    H0_mag: float | None = None
    nq_l2_h0: float | None = None

    def __post_init__(self):
        for name in ("dP_max", "rocof_max", "dw_max", "k_HP"):
            _check_positive(name, getattr(self, name))
        if not 10 <= self.k_HP <= 30:
            raise ValueError("k_HP must lie in [10, 30]")
        for name in ("nq", "lambda2", "H0_mag", "nq_l2_h0"):
            v = getattr(self, name)
            if v is not None:
                _check_positive(name, v)
        if self.rho is not None:
            _check_positive("rho", self.rho)
            if not 0.01 <= self.rho <= 0.5:
                raise ValueError("rho must lie in [0.01, 0.5]")
            if self.grouping is None:
                raise ValueError("k_v needs nq, lambda2 and H0_mag (or their product)")

    @property
    def grouping(self) -> float | None:
        if self.nq_l2_h0 is not None:
            return self.nq_l2_h0
        if None in (self.nq, self.lambda2, self.H0_mag):
            return None
        return self.nq * self.lambda2 * self.H0_mag


def _check_positive(name, v):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
        raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class DesignResult:
    J0: float
    D0: float
    omega_c: float
    tau: float
    mu: float
    k_v: float | None = None

    def to_dict(self) -> dict:
        return {"J0": self.J0, "D0": self.D0, "omega_c": self.omega_c, "tau": self.tau, "mu": self.mu, "k_v": self.k_v}


DESIGN_FORMULAS = {
    "J0": "J0 = dP_max / RoCoF_max",
    "D0": "D0 = dP_max / dw_max",
    "omega_c": "omega_c = D0 / J0",
    "tau": "tau = 1 / (k_HP * omega_c)",
    "mu": "mu = tau",
    "k_v": "k_v = rho * omega_c / (nq * lambda2 * |H(0)|)",
}


def design_params(d: DesignInputs) -> DesignResult:
    J0 = d.dP_max / d.rocof_max
    D0 = d.dP_max / d.dw_max
    wc = D0 / J0
    tau = 1.0 / (d.k_HP * wc)
    k_v = None
    if d.rho is not None:
        k_v = d.rho * wc / d.grouping
    return DesignResult(J0, D0, wc, tau, tau, k_v)


def h0_magnitude(Vi: float, Vp: float, Zv0: float, Zl_ohm: float) -> float:
    """Static gain ``|Vi (Vi - Vp) / (Zv0 + Zl)^2|`` of Q with respect to branch reactance."""
    Z = Zv0 + Zl_ohm
    if Z <= 0:
        raise ValueError("total impedance Zv0 + Zl must be positive")
    return abs(Vi * (Vi - Vp) / (Z * Z))
