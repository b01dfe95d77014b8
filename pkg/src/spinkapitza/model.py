"""
Equations of motion for a magnetic moment driven by a fast field mode.

All torques are divided by the effective moment of inertia, so the
dynamics depend only on

    omega0_sq   slow frequency squared (applied field), s^-2
    eps         drive strength, s^-2
    gamma       drive angular frequency, s^-1
    omega_L     Larmor precession rate, s^-1

Driven equation (1D, planar):

    theta'' = omega0^2 sin(theta) + eps sin(theta) cos(gamma t + phase)

Averaging over one drive period gives the slow equation

    theta'' = omega0^2 sin(theta) - (Omega^2 - omega_L^2) sin(theta) cos(theta)

with Omega = eps / (sqrt(2) gamma).

The scalar acceleration kernels are compiled with numba so the same code
serves the public right-hand sides and the integrator inner loops.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numba

__all__ = [
    "InvalidParametersError",
    "CoordinateSingularityError",
    "ReducedParams",
    "SpinState",
    "StateDerivative",
    "DimensionlessSpec",
    "ModelVariant",
    "DEFAULT_POLE_TOL",
    "big_omega",
    "from_dimensionless",
    "to_dimensionless_spec",
    "rhs",
    "rhs_driven_1d",
    "rhs_undriven_1d",
    "rhs_full_2d",
    "rhs_spherical_conserved",
    "rhs_averaged",
    "energy_undriven",
    "azimuthal_momentum",
]

DEFAULT_POLE_TOL = 1e-6


class InvalidParametersError(ValueError):
    """Raised when model parameters violate their invariants."""


class CoordinateSingularityError(ValueError):
    """Raised when the spherical equations are evaluated at a pole with phi_dot != 0."""


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidParametersError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class ReducedParams:
    """Torque-per-inertia parameters shared by every model variant."""

    omega0_sq: float
    eps: float
    gamma: float
    omega_L: float = 0.0
    drive_phase: float = 0.0

    def __post_init__(self):
        _check_finite(omega0_sq=self.omega0_sq, eps=self.eps, gamma=self.gamma,
                      omega_L=self.omega_L, drive_phase=self.drive_phase)
        if self.omega0_sq < 0:
            raise InvalidParametersError("omega0_sq must be >= 0")
        if self.eps < 0:
            raise InvalidParametersError("eps must be >= 0")
        if self.gamma < 0:
            raise InvalidParametersError("gamma must be >= 0")
        if self.eps > 0 and self.gamma <= 0:
            raise InvalidParametersError("gamma must be > 0 when eps > 0")
        if self.omega_L < 0:
            raise InvalidParametersError("omega_L must be >= 0")

    @property
    def omega0(self) -> float:
        return math.sqrt(self.omega0_sq)

    def replace(self, **changes) -> "ReducedParams":
        fields = dict(omega0_sq=self.omega0_sq, eps=self.eps, gamma=self.gamma,
                      omega_L=self.omega_L, drive_phase=self.drive_phase)
        fields.update(changes)
        return ReducedParams(**fields)


class SpinState(NamedTuple):
    """Rotor state. ``theta`` is never wrapped so excursions stay visible."""

    theta: float
    theta_dot: float = 0.0
    phi: float = 0.0
    phi_dot: float = 0.0


class StateDerivative(NamedTuple):
    theta_dot: float
    theta_ddot: float
    phi_dot: float
    phi_ddot: float


@dataclass(frozen=True)
class DimensionlessSpec:
    """Simulation spec in units where Omega = 1.

    a           2 omega0^2 / Omega^2 (the parameter of the potential plot)
    gamma_ratio gamma / Omega
    lambda_L    omega_L / Omega
    """

    a: float
    gamma_ratio: float
    lambda_L: float = 0.0
    drive_phase: float = 0.0

    def __post_init__(self):
        _check_finite(a=self.a, gamma_ratio=self.gamma_ratio,
                      lambda_L=self.lambda_L, drive_phase=self.drive_phase)
        if self.a < 0:
            raise InvalidParametersError("a must be >= 0")
        if self.gamma_ratio <= 0:
            raise InvalidParametersError("gamma_ratio must be > 0")
        if self.lambda_L < 0:
            raise InvalidParametersError("lambda_L must be >= 0")


class ModelVariant(enum.Enum):
    DRIVEN_1D = "driven1d"
    AVERAGED_1D = "averaged1d"
    FULL_2D = "full2d"
    AVERAGED_2D = "averaged2d"
    SPHERICAL_CONSERVED = "spherical"
    UNDRIVEN_1D = "undriven"

    @property
    def code(self) -> int:
        return _VARIANT_CODES[self]

    @property
    def is_driven(self) -> bool:
        return self in (ModelVariant.DRIVEN_1D, ModelVariant.FULL_2D,
                        ModelVariant.SPHERICAL_CONSERVED)

    @property
    def is_planar(self) -> bool:
        """True for variants in which omega_L must be zero."""
        return self in (ModelVariant.DRIVEN_1D, ModelVariant.AVERAGED_1D,
                        ModelVariant.UNDRIVEN_1D)


_VARIANT_CODES = {
    ModelVariant.DRIVEN_1D: 0,
    ModelVariant.AVERAGED_1D: 1,
    ModelVariant.FULL_2D: 2,
    ModelVariant.AVERAGED_2D: 3,
    ModelVariant.SPHERICAL_CONSERVED: 4,
    ModelVariant.UNDRIVEN_1D: 5,
}


def big_omega(p: ReducedParams) -> float:
    """Vibration-induced frequency ``Omega = eps / (sqrt(2) gamma)``."""
    if p.eps == 0.0:
        return 0.0
    if p.gamma <= 0:
        raise InvalidParametersError("gamma must be > 0 to define Omega")
    return p.eps / (math.sqrt(2.0) * p.gamma)


def from_dimensionless(s: DimensionlessSpec) -> ReducedParams:
    """Reduced parameters for ``s`` with Omega fixed to 1 s^-1."""
    return ReducedParams(
        omega0_sq=s.a / 2.0,
        eps=math.sqrt(2.0) * s.gamma_ratio,
        gamma=s.gamma_ratio,
        omega_L=s.lambda_L,
        drive_phase=s.drive_phase,
    )


def to_dimensionless_spec(p: ReducedParams) -> DimensionlessSpec:
    """Inverse of :func:`from_dimensionless` for any params with Omega > 0."""
    omega = big_omega(p)
    if omega <= 0:
        raise InvalidParametersError("Omega must be > 0 to form a dimensionless spec")
    return DimensionlessSpec(
        a=2.0 * p.omega0_sq / omega**2,
        gamma_ratio=p.gamma / omega,
        lambda_L=p.omega_L / omega,
        drive_phase=p.drive_phase,
    )


# ---------------------------------------------------------------------------
# compiled scalar kernels

@numba.njit(cache=True)
def _acc_driven(theta, t, omega0_sq, eps, gamma, phase):
    s = math.sin(theta)
    return omega0_sq * s + eps * s * math.cos(gamma * t + phase)


@numba.njit(cache=True)
def _acc_full_2d(theta, t, omega0_sq, eps, gamma, omega_L, phase):
    s = math.sin(theta)
    c = math.cos(theta)
    return omega0_sq * s + omega_L * omega_L * s * c + eps * s * math.cos(gamma * t + phase)


@numba.njit(cache=True)
def _acc_spherical(theta, phi_dot, t, omega0_sq, eps, gamma, phase):
    s = math.sin(theta)
    c = math.cos(theta)
    return phi_dot * phi_dot * s * c + omega0_sq * s + eps * s * math.cos(gamma * t + phase)


@numba.njit(cache=True)
def _phi_acc_spherical(theta, theta_dot, phi_dot):
    # d/dt (phi_dot sin^2 theta) = 0
    return -2.0 * phi_dot * theta_dot * math.cos(theta) / math.sin(theta)


@numba.njit(cache=True)
def _acc_averaged(theta, omega0_sq, big_omega_sq, omega_L):
    s = math.sin(theta)
    return omega0_sq * s - (big_omega_sq - omega_L * omega_L) * s * math.cos(theta)


@numba.njit(cache=True)
def _acc_undriven(theta, omega0_sq):
    return omega0_sq * math.sin(theta)


# Packed parameter vector used by the integrator kernels.
# [omega0_sq, eps, gamma, omega_L, phase, Omega^2, pole_tol]
@numba.njit(cache=True)
def deriv_into(code, t, y, pr, out):
    """Write dy/dt into ``out``; return 0 on success, 1 on a pole singularity."""
    theta = y[0]
    theta_dot = y[1]
    out[0] = theta_dot
    if code == 0:
        out[1] = _acc_driven(theta, t, pr[0], pr[1], pr[2], pr[4])
        out[2] = 0.0
        out[3] = 0.0
    elif code == 1 or code == 3:
        out[1] = _acc_averaged(theta, pr[0], pr[5], pr[3])
        out[2] = pr[3]
        out[3] = 0.0
    elif code == 2:
        out[1] = _acc_full_2d(theta, t, pr[0], pr[1], pr[2], pr[3], pr[4])
        out[2] = pr[3]
        out[3] = 0.0
    elif code == 4:
        phi_dot = y[3]
        if phi_dot != 0.0 and abs(math.sin(theta)) < pr[6]:
            return 1
        out[1] = _acc_spherical(theta, phi_dot, t, pr[0], pr[1], pr[2], pr[4])
        out[2] = phi_dot
        out[3] = 0.0 if phi_dot == 0.0 else _phi_acc_spherical(theta, theta_dot, phi_dot)
    else:
        out[1] = _acc_undriven(theta, pr[0])
        out[2] = 0.0
        out[3] = 0.0
    return 0


def pack_params(p: ReducedParams, pole_tol: float = DEFAULT_POLE_TOL):
    import numpy as np

    return np.array([p.omega0_sq, p.eps, p.gamma, p.omega_L, p.drive_phase,
                     big_omega(p) ** 2, pole_tol], dtype=np.float64)


# ---------------------------------------------------------------------------
# public right-hand sides

def rhs_driven_1d(state: SpinState, p: ReducedParams, t: float) -> StateDerivative:
    """Planar driven equation; phi is frozen."""
    acc = _acc_driven(state.theta, t, p.omega0_sq, p.eps, p.gamma, p.drive_phase)
    return StateDerivative(state.theta_dot, acc, 0.0, 0.0)


def rhs_undriven_1d(state: SpinState, p: ReducedParams, t: float = 0.0) -> StateDerivative:
    """Applied field only: ``theta'' = omega0^2 sin(theta)``. ``eps`` is ignored."""
    return StateDerivative(state.theta_dot, _acc_undriven(state.theta, p.omega0_sq), 0.0, 0.0)


def rhs_full_2d(state: SpinState, p: ReducedParams, t: float) -> StateDerivative:
    """Driven equation with Larmor precession; phi advances at exactly ``omega_L``."""
    acc = _acc_full_2d(state.theta, t, p.omega0_sq, p.eps, p.gamma, p.omega_L, p.drive_phase)
    return StateDerivative(state.theta_dot, acc, p.omega_L, 0.0)


def rhs_spherical_conserved(state: SpinState, p: ReducedParams, t: float,
                            pole_tol: float = DEFAULT_POLE_TOL) -> StateDerivative:
    """Full spherical equations with ``phi_dot sin^2(theta)`` conserved.

    Raises
    ------
    CoordinateSingularityError
        If ``|sin(theta)| < pole_tol`` while ``phi_dot != 0``.
    """
    theta, theta_dot, _, phi_dot = state
    if phi_dot != 0.0 and abs(math.sin(theta)) < pole_tol:
        raise CoordinateSingularityError(
            f"|sin(theta)| < {pole_tol:g} at theta={theta!r} with phi_dot={phi_dot!r}")
    acc = _acc_spherical(theta, phi_dot, t, p.omega0_sq, p.eps, p.gamma, p.drive_phase)
    phi_acc = 0.0 if phi_dot == 0.0 else _phi_acc_spherical(theta, theta_dot, phi_dot)
    return StateDerivative(theta_dot, acc, phi_dot, phi_acc)


def rhs_averaged(state: SpinState, p: ReducedParams, t: float = 0.0) -> StateDerivative:
    """Slow equation obtained by averaging out the drive. Time-independent."""
    acc = _acc_averaged(state.theta, p.omega0_sq, big_omega(p) ** 2, p.omega_L)
    return StateDerivative(state.theta_dot, acc, p.omega_L, 0.0)


_RHS = {
    ModelVariant.DRIVEN_1D: rhs_driven_1d,
    ModelVariant.AVERAGED_1D: rhs_averaged,
    ModelVariant.FULL_2D: rhs_full_2d,
    ModelVariant.AVERAGED_2D: rhs_averaged,
    ModelVariant.SPHERICAL_CONSERVED: rhs_spherical_conserved,
    ModelVariant.UNDRIVEN_1D: rhs_undriven_1d,
}


def rhs(variant: ModelVariant, state: SpinState, p: ReducedParams, t: float = 0.0) -> StateDerivative:
    return _RHS[variant](state, p, t)


def energy_undriven(state: SpinState, p: ReducedParams) -> float:
    """Energy per inertia ``theta_dot^2 / 2 + omega0^2 cos(theta)`` of the undriven rotor."""
    return 0.5 * state.theta_dot**2 + p.omega0_sq * math.cos(state.theta)


def azimuthal_momentum(state: SpinState) -> float:
    """Conserved ``phi_dot sin^2(theta)`` of the spherical equations."""
    return state.phi_dot * math.sin(state.theta) ** 2
