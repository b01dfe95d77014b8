"""
Electron parameters of the zero-point-field mode model and lab-regime checks.

Constants are stored in SI. Gaussian expressions (alpha = e^2 / hbar c,
mu0 = |e| hbar / 2 m c) are evaluated through alpha and the Bohr magneton,
so no charge-unit conversion is needed. The one place Gaussian field units
are used explicitly is the mode amplitude B0, which is reported in gauss
and tesla.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

from scipy import constants as _sc

from .model import DimensionlessSpec

__all__ = [
    "PhysicalConstants",
    "ElectronSpinParams",
    "LabScenario",
    "ConditionReport",
    "ScaledSpec",
    "AuditReport",
    "QUOTED_LARMOR",
    "electron_params",
    "larmor_frequency",
    "stability_condition_report",
    "relative_frequency_gap",
    "to_dimensionless",
    "audit_identities",
    "physical_report",
]

# reference value for the alpha sanity check
ALPHA_REFERENCE = 7.2973525643e-3

# Larmor frequencies quoted for EPR fields (order-of-magnitude claims)
QUOTED_LARMOR = {0.35: 1e10, 10.0: 1e13}

# SI -> Gaussian
_J_TO_ERG = 1e7
_M_TO_CM = 1e2
_KG_TO_G = 1e3
_JPERT_TO_ERGPERG = 1e3
_GAUSS_TO_TESLA = 1e-4


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float
    m_e: float
    c: float
    alpha: float
    mu0_moment: float  # Bohr magneton, J/T
    source: str

    def __post_init__(self):
        for name in ("hbar", "m_e", "c", "alpha", "mu0_moment"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite")
        if abs(self.alpha / ALPHA_REFERENCE - 1.0) > 1e-6:
            raise ValueError(f"alpha={self.alpha!r} is not the fine-structure constant")

    @classmethod
    def codata(cls) -> "PhysicalConstants":
        """Current CODATA values as shipped with scipy."""
        return cls(
            hbar=_sc.hbar,
            m_e=_sc.m_e,
            c=_sc.c,
            alpha=_sc.alpha,
            mu0_moment=_sc.physical_constants["Bohr magneton"][0],
            source="CODATA via scipy.constants",
        )


@dataclass(frozen=True)
class ElectronSpinParams:
    omega_C: float  # s^-1
    lambda_C: float  # m
    I_inertia: float  # kg m^2
    r_eff: float  # m
    mu0_moment: float  # J/T
    B0_gauss: float
    B0_tesla: float
    Omega_paper: float  # s^-1, sqrt(3 alpha / 8) omega_C
    Omega_recomputed: float  # s^-1, mu0 B0 / (sqrt 2 I omega_C)


@dataclass(frozen=True)
class LabScenario:
    B_tesla: float
    description: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.B_tesla) and self.B_tesla > 0):
            raise ValueError("B_tesla must be > 0")


def electron_params(consts: PhysicalConstants) -> ElectronSpinParams:
    hbar, m, c = consts.hbar, consts.m_e, consts.c
    omega_C = m * c**2 / hbar
    lambda_C = 2.0 * math.pi * hbar / (m * c)
    inertia = hbar / omega_C
    r_eff = hbar / (m * c)

    # Mode amplitude from B0^2 = (3/2) (2 pi / lambda_C)^3 hbar omega_C, in
    # Gaussian units (erg/cm^3 -> G^2).
    k_cgs = 2.0 * math.pi / (lambda_C * _M_TO_CM)
    b0_sq_cgs = 1.5 * k_cgs**3 * hbar * _J_TO_ERG * omega_C
    b0_gauss = math.sqrt(b0_sq_cgs)

    mu_cgs = consts.mu0_moment * _JPERT_TO_ERGPERG
    inertia_cgs = inertia * _KG_TO_G * _M_TO_CM**2
    omega_rec = mu_cgs * b0_gauss / (math.sqrt(2.0) * inertia_cgs * omega_C)

    return ElectronSpinParams(
        omega_C=omega_C,
        lambda_C=lambda_C,
        I_inertia=inertia,
        r_eff=r_eff,
        mu0_moment=consts.mu0_moment,
        B0_gauss=b0_gauss,
        B0_tesla=b0_gauss * _GAUSS_TO_TESLA,
        Omega_paper=math.sqrt(3.0 * consts.alpha / 8.0) * omega_C,
        Omega_recomputed=omega_rec,
    )


def larmor_frequency(consts: PhysicalConstants, scenario: LabScenario) -> float:
    """``omega_L = mu0 B / hbar`` in s^-1."""
    return consts.mu0_moment * scenario.B_tesla / consts.hbar


class ConditionReport(NamedTuple):
    lhs: float
    rhs: float
    satisfied: bool
    margin: float


def stability_condition_report(consts: PhysicalConstants, scenario: LabScenario) -> ConditionReport:
    """Check ``omega_L < (3/8) alpha omega_C``; margin is rhs / lhs."""
    lhs = larmor_frequency(consts, scenario)
    rhs = 3.0 / 8.0 * consts.alpha * electron_params(consts).omega_C
    return ConditionReport(lhs, rhs, lhs < rhs, rhs / lhs)


def relative_frequency_gap(consts: PhysicalConstants, scenario: LabScenario) -> float:
    """``(8 / 3 alpha) omega_L / omega_C``, the relative splitting of omega_+-."""
    omega_C = electron_params(consts).omega_C
    return 8.0 / (3.0 * consts.alpha) * larmor_frequency(consts, scenario) / omega_C


class ScaledSpec(NamedTuple):
    spec: DimensionlessSpec
    cap_applied: bool
    physical_gamma_ratio: float


def to_dimensionless(consts: PhysicalConstants, scenario: LabScenario,
                     gamma_ratio_cap: float = 200.0) -> ScaledSpec:
    """Map a lab field onto the simulation's dimensionless spec.

    The drive-to-Omega ratio is capped at ``gamma_ratio_cap``; the physical
    ratio ``omega_C / Omega`` is about 19 and never reaches the allowed caps.
    """
    if not 50.0 <= gamma_ratio_cap <= 1e4:
        raise ValueError("gamma_ratio_cap must lie in [50, 1e4]")
    ep = electron_params(consts)
    omega_L = larmor_frequency(consts, scenario)
    omega0_sq = consts.mu0_moment * scenario.B_tesla / ep.I_inertia
    a = 2.0 * omega0_sq / ep.Omega_paper**2
    ratio = ep.omega_C / ep.Omega_paper
    spec = DimensionlessSpec(a=a, gamma_ratio=min(ratio, gamma_ratio_cap),
                             lambda_L=omega_L / ep.Omega_paper)
    return ScaledSpec(spec, ratio > gamma_ratio_cap, ratio)


@dataclass(frozen=True)
class AuditReport:
    omega_sq_ratio: float  # Omega_recomputed^2 / Omega_paper^2
    omega_sq_ratio_expected: float
    b0_recipe_ratio: float  # energy-density recipe B0^2 / printed B0^2
    b0_recipe_ratio_expected: float
    omega_sq_discrepancy: bool
    b0_recipe_discrepancy: bool
    notes: tuple


def audit_identities(consts: PhysicalConstants) -> AuditReport:
    """Numerically re-derive the mode amplitude and Omega and compare with the quoted forms.

    Two ratios are reported:

    * ``Omega^2`` from ``mu0 B0 / (sqrt 2 I gamma)`` with the printed ``B0^2``
      and ``gamma = omega_C``, divided by ``(3/8) alpha omega_C^2``;
    * ``B0^2`` rebuilt from ``(hbar omega_C / 2) / ((4/3) pi r_eff^3)``,
      divided by the printed ``(3/2) (2 pi / lambda_C)^3 hbar omega_C``.

    A ratio away from 1 is flagged; neither side is declared correct.
    """
    ep = electron_params(consts)
    omega_ratio = (ep.Omega_recomputed / ep.Omega_paper) ** 2

    r_cgs = ep.r_eff * _M_TO_CM
    energy_cgs = 0.5 * consts.hbar * _J_TO_ERG * ep.omega_C
    recipe = energy_cgs / (4.0 / 3.0 * math.pi * r_cgs**3)
    b0_ratio = recipe / ep.B0_gauss**2

    omega_flag = abs(omega_ratio - 1.0) > 1e-9
    b0_flag = abs(b0_ratio - 1.0) > 1e-9
    notes = []
    if omega_flag:
        notes.append(f"Omega^2 recomputed from mu0 B0/(sqrt2 I omega_C) is {omega_ratio:.12g} "
                     "times (3/8) alpha omega_C^2")
    if b0_flag:
        notes.append(f"B0^2 from the energy-density recipe is {b0_ratio:.12g} times the "
                     "printed (3/2)(2pi/lambda_C)^3 hbar omega_C")
    return AuditReport(omega_ratio, 0.5, b0_ratio, 1.0 / (4.0 * math.pi), omega_flag, b0_flag,
                       tuple(notes))


def physical_report(consts: PhysicalConstants, fields_tesla, gamma_ratio_cap: float = 200.0) -> dict:
    """JSON-ready report for a list of applied fields."""
    ep = electron_params(consts)
    rows = []
    for B in fields_tesla:
        sc = LabScenario(float(B))
        cond = stability_condition_report(consts, sc)
        scaled = to_dimensionless(consts, sc, gamma_ratio_cap)
        quoted = QUOTED_LARMOR.get(sc.B_tesla)
        row = {
            "B_tesla": sc.B_tesla,
            "omega_L": cond.lhs,
            "condition_lhs": cond.lhs,
            "condition_rhs": cond.rhs,
            "condition_satisfied": cond.satisfied,
            "margin": cond.margin,
            "relative_frequency_gap": relative_frequency_gap(consts, sc),
            "a": scaled.spec.a,
            "gamma_ratio": scaled.spec.gamma_ratio,
            "gamma_ratio_cap_applied": scaled.cap_applied,
            "lambda_L": scaled.spec.lambda_L,
            "omega_L_quoted": quoted,
        }
        if quoted is not None:
            row["omega_L_quoted_consistent"] = abs(math.log10(cond.lhs / quoted)) < 1.0
        rows.append(row)
    audit = audit_identities(consts)
    return {
        "constants": asdict(consts),
        "electron": asdict(ep),
        "physical_gamma_ratio": ep.omega_C / ep.Omega_paper,
        "fields": rows,
        "audit": asdict(audit),
    }
