"""
Acceptance criteria A1-A11.

Each criterion is a function returning a :class:`CriterionResult`. A
criterion passes only if every check holds and it ran within its time
budget. JIT compilation is done once up front by :func:`warmup` and is
not charged to any criterion.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import physics
from .analysis import (
    StabilityProbe,
    classify_equilibria,
    compare_full_vs_averaged,
    decompose_slow_fast,
    effective_potential,
    is_bounded,
    measure_frequency,
    potential_curve,
    predicted_fast_amplitude,
    slow_period,
    sweep_stability,
)
from .integrate import IntegratorConfig, convergence_order, integrate
from .model import (
    DimensionlessSpec,
    ModelVariant,
    ReducedParams,
    SpinState,
    azimuthal_momentum,
    energy_undriven,
    from_dimensionless,
    rhs_averaged,
)


@dataclass
class CriterionResult:
    id: str
    title: str
    passed: bool
    runtime: float
    budget: float
    checks: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [k for k, ok in self.checks.items() if not ok]
        tail = f"  failed: {', '.join(failed)}" if failed else ""
        return f"{self.id} {status} ({self.runtime:.2f}s / {self.budget:g}s) {self.title}{tail}"

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "passed": self.passed,
                "runtime": self.runtime, "budget": self.budget,
                "checks": dict(self.checks), "detail": _jsonable(self.detail)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


_CRITERIA: dict[str, tuple[str, float, Callable]] = {}
_cache: dict = {}


def criterion(cid: str, title: str, budget: float):
    def deco(fn):
        _CRITERIA[cid] = (title, budget, fn)
        return fn
    return deco


def warmup():
    """Compile every integrator kernel once."""
    p = from_dimensionless(DimensionlessSpec(0.18, 20.0, 0.1))
    for variant in ModelVariant:
        q = p.replace(omega_L=0.0) if variant.is_planar else p
        for cfg in (IntegratorConfig(t_end=1.0, sample_stride=1),
                    IntegratorConfig(t_end=1.0, sample_dt=0.1),
                    IntegratorConfig(t_end=1.0, method="AdaptiveEmbedded", sample_stride=1)):
            integrate(variant, SpinState(0.3, 0.0, 0.0, 0.1), q, cfg, stop_excursion=(0.0, 10.0))
    rhs_averaged(SpinState(0.1), p)


def _a3_run(theta_eq: float, lambda_L: float = 0.0):
    """Drive-resolved run about ``theta_eq`` for a = 0.18, gamma/Omega = 200 (memoized)."""
    key = ("a3", theta_eq, lambda_L)
    if key not in _cache:
        spec = DimensionlessSpec(a=0.18, gamma_ratio=200.0, lambda_L=lambda_L)
        p = from_dimensionless(spec)
        variant = ModelVariant.DRIVEN_1D if lambda_L == 0 else ModelVariant.FULL_2D
        T = slow_period(p)
        traj = integrate(variant, SpinState(theta_eq + 0.05), p,
                         IntegratorConfig(t_end=20 * T, sample_stride=1))
        _cache[key] = (p, traj, decompose_slow_fast(traj))
    return _cache[key]


@criterion("A1", "potential curve reproduces U(0)=a, U(pi)=-a, gap 2a", 1.0)
def a1():
    checks, detail = {}, {}
    for a in (1e-2, 1e-1):
        curve = potential_curve(DimensionlessSpec(a=a, gamma_ratio=200.0), n=721)
        th, u = curve.thetas, curve.u_values
        u0 = u[np.argmin(np.abs(th))]
        upi = u[-1]
        uhalf = u[np.argmin(np.abs(th - np.pi / 2))]
        minima = curve.local_minima()
        ok_min = len(minima) == 2 and all(
            min(abs(m), abs(abs(m) - np.pi)) < 1e-12 for m in minima)
        checks[f"a={a}: U(0)=a"] = abs(u0 - a) < 1e-12
        checks[f"a={a}: U(pi)=-a"] = abs(upi + a) < 1e-12
        checks[f"a={a}: U(pi/2)=1"] = abs(uhalf - 1.0) < 1e-12
        checks[f"a={a}: gap=2a"] = abs((u0 - upi) - 2 * a) < 1e-12
        checks[f"a={a}: minima at 0, pi"] = ok_min
        detail[f"a={a}"] = {"U0": u0, "Upi": upi, "Uhalf": uhalf, "minima": list(minima)}
    return checks, detail


@criterion("A2", "empirical stability boundary at a = 2", 60.0)
def a2(parallel: int = 1):
    checks, detail = {}, {}
    p = from_dimensionless(DimensionlessSpec(a=0.5, gamma_ratio=200.0))
    horizon = 100 * slow_period(p)
    traj = integrate(ModelVariant.DRIVEN_1D, SpinState(0.05), p,
                     IntegratorConfig(t_end=horizon), stop_excursion=(0.0, 0.5))
    v = is_bounded(traj, 0.0, 0.5, horizon)
    checks["a=0.5 bounded < 0.5 rad over 100 slow periods"] = v.bounded
    detail["a=0.5"] = {"max_excursion": v.max_excursion}

    q = ReducedParams(omega0_sq=1.44, eps=math.sqrt(2) * 200.0, gamma=200.0)
    horizon = 20 * slow_period(q)
    traj = integrate(ModelVariant.DRIVEN_1D, SpinState(0.05), q,
                     IntegratorConfig(t_end=horizon), stop_excursion=(0.0, math.pi / 2))
    v = is_bounded(traj, 0.0, math.pi / 2, horizon)
    checks["omega0=1.2 Omega exceeds pi/2 within 20 slow periods"] = not v.bounded
    detail["omega0=1.2"] = {"t_exceeded": v.t_exceeded}

    cells = sweep_stability([0.5, 1.0, 1.8, 2.2, 3.0], [200.0], [0.0], StabilityProbe(),
                            parallel=parallel)
    agree = all(c.agreement for c in cells if abs(c.a - 2.0) > 0.2)
    checks["sweep verdicts agree for |a-2| > 0.2"] = agree
    detail["sweep"] = [(c.a, c.analytic, c.empirical_bounded) for c in cells]
    return checks, detail


@criterion("A3", "slow frequencies match omega_-, omega_+ within 2%", 30.0)
def a3():
    checks, detail = {}, {}
    for theta_eq, name in ((0.0, "omega_minus"), (math.pi, "omega_plus")):
        p, traj, dec = _a3_run(theta_eq)
        rep = classify_equilibria(p)
        predicted = getattr(rep, name)
        m = dec.interior
        est = measure_frequency(dec.times[m], dec.slow_theta[m], theta_eq)
        rel = abs(est.omega_measured / predicted - 1.0) if predicted else math.inf
        checks[f"{name} within 2%"] = rel < 0.02
        detail[name] = {"measured": est.omega_measured, "predicted": predicted, "rel_err": rel}
    rep = classify_equilibria(p)
    lhs = rep.omega_plus**2 - rep.omega_minus**2
    checks["omega_+^2 - omega_-^2 = 2 omega0^2"] = abs(lhs - 2 * p.omega0_sq) <= 1e-12 * 2 * p.omega0_sq
    return checks, detail


@criterion("A4", "fast residual amplitude matches (eps/gamma^2) sin(Theta) within 5%", 10.0)
def a4():
    p, traj, dec = _a3_run(0.0)
    m = dec.interior
    predicted = predicted_fast_amplitude(dec.slow_theta, p) * np.cos(p.gamma * dec.times + p.drive_phase)
    rms_meas = float(np.sqrt(np.mean(dec.fast_theta[m] ** 2)))
    rms_pred = float(np.sqrt(np.mean(predicted[m] ** 2)))
    # sign: fast part is -amplitude cos(gamma t)
    proj = float(np.sum(dec.fast_theta[m] * -predicted[m]) / np.sum(predicted[m] ** 2))
    ratio = rms_meas / rms_pred
    return ({"RMS ratio within 5%": abs(ratio - 1) < 0.05,
             "phase/sign matches -A cos(gamma t)": abs(proj - 1) < 0.05},
            {"rms_measured": rms_meas, "rms_predicted": rms_pred, "projection": proj})


@criterion("A5", "averaged dynamics track the slow part; drive phase irrelevant", 30.0)
def a5():
    spec0 = DimensionlessSpec(a=0.18, gamma_ratio=500.0)
    horizon = 20 * slow_period(from_dimensionless(spec0))
    m0 = compare_full_vs_averaged(spec0, SpinState(0.05), horizon)
    spec1 = DimensionlessSpec(a=0.18, gamma_ratio=500.0, drive_phase=math.pi / 2)
    m1 = compare_full_vs_averaged(spec1, SpinState(0.05), horizon)
    return ({"RMS < 0.02 rad": m0.rms < 0.02,
             "|RMS(phase pi/2) - RMS(phase 0)| < 0.005": abs(m1.rms - m0.rms) < 0.005},
            {"rms_phase0": m0.rms, "max_phase0": m0.max, "rms_phase_pi2": m1.rms})


@criterion("A6", "Larmor-precessing model: phi rate, frequencies, boundary 2(1-lambda^2)", 30.0)
def a6():
    checks, detail = {}, {}
    lam = 0.3
    for theta_eq, sign in ((0.0, -1.0), (math.pi, 1.0)):
        p, traj, dec = _a3_run(theta_eq, lambda_L=lam)
        if theta_eq == 0.0:
            checks["phi_dot column == omega_L"] = bool(np.all(traj.phi_dot == p.omega_L))
            phi_err = float(np.max(np.abs(traj.phi - p.omega_L * traj.times)))
            checks["phi(t) = omega_L t"] = phi_err == 0.0
            detail["phi_error"] = phi_err
        predicted = math.sqrt((1.0 - lam**2) + sign * p.omega0_sq)
        m = dec.interior
        est = measure_frequency(dec.times[m], dec.slow_theta[m], theta_eq)
        rel = abs(est.omega_measured / predicted - 1)
        key = "omega_minus" if sign < 0 else "omega_plus"
        checks[f"{key} within 2%"] = rel < 0.02
        detail[key] = {"measured": est.omega_measured, "predicted": predicted, "rel_err": rel}

    def state(a):
        return classify_equilibria(from_dimensionless(
            DimensionlessSpec(a=a, gamma_ratio=200.0, lambda_L=lam))).at(0.0).classification

    def edge(is_left):
        lo, hi = 1.0, 3.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            s = state(mid)
            left = (s == "stable") if is_left else (s != "unstable")
            lo, hi = (mid, hi) if left else (lo, mid)
        return lo if is_left else hi

    boundary = 0.5 * (edge(True) + edge(False))
    expected = 2 * (1 - lam**2)
    checks["analytic boundary at 2(1-lambda^2) to 1e-12"] = abs(boundary - expected) <= 1e-12 * expected
    checks["a below boundary: theta=0 stable"] = state(1.5) == "stable"
    checks["a above boundary: theta=0 unstable"] = state(2.1) == "unstable"
    detail["boundary"] = boundary
    return checks, detail


@criterion("A7", "physical regime: condition margin, frequency gap, a", 1.0)
def a7():
    consts = physics.PhysicalConstants.codata()
    checks, detail = {}, {}
    for B in (0.35, 10.0):
        sc = physics.LabScenario(B)
        cond = physics.stability_condition_report(consts, sc)
        gap = physics.relative_frequency_gap(consts, sc)
        a = physics.to_dimensionless(consts, sc).spec.a
        checks[f"B={B} T: condition satisfied"] = cond.satisfied
        checks[f"B={B} T: margin > 1e7"] = cond.margin > 1e7
        checks[f"B={B} T: dOmega/Omega < 1e-6"] = gap < 1e-6
        checks[f"B={B} T: a < 1e-6"] = a < 1e-6
        detail[f"B={B}"] = {"omega_L": cond.lhs, "margin": cond.margin, "gap": gap, "a": a}
    return checks, detail


@criterion("A8", "energy and p_phi conservation below 1e-8", 10.0)
def a8():
    p = ReducedParams(omega0_sq=1.0, eps=0.0, gamma=0.0)
    T = 2 * math.pi
    traj = integrate(ModelVariant.UNDRIVEN_1D, SpinState(2.0), p,
                     IntegratorConfig(t_end=100 * T, dt=T / 1000, sample_stride=1))
    E = 0.5 * traj.theta_dot**2 + p.omega0_sq * np.cos(traj.theta)
    E0 = energy_undriven(traj.state(0), p)
    drift_E = float(np.max(np.abs(E - E0)) / abs(E0))

    free = ReducedParams(0.0, 0.0, 0.0)
    ini = SpinState(math.pi / 3, 0.0, 0.0, 1.0)
    Tr = 2 * math.pi / (ini.phi_dot * math.sin(ini.theta))
    traj = integrate(ModelVariant.SPHERICAL_CONSERVED, ini, free,
                     IntegratorConfig(t_end=100 * Tr, dt=Tr / 1000, sample_stride=1))
    L = traj.phi_dot * np.sin(traj.theta) ** 2
    L0 = azimuthal_momentum(ini)
    drift_L = float(np.max(np.abs(L - L0)) / abs(L0))
    return ({"energy drift < 1e-8": drift_E < 1e-8, "p_phi drift < 1e-8": drift_L < 1e-8},
            {"energy_drift": drift_E, "p_phi_drift": drift_L})


@criterion("A9", "observed RK4 order in [3.7, 4.3]", 10.0)
def a9():
    p = ReducedParams(omega0_sq=1.0, eps=0.0, gamma=0.0)
    T = 2 * math.pi
    est = convergence_order(ModelVariant.UNDRIVEN_1D, SpinState(2.0), p,
                            [T / 50, T / 100, T / 200, T / 400], t_end=T)
    ok = est.conclusive and 3.7 <= est.order <= 4.3
    return {"order in [3.7, 4.3]": ok}, {"order": est.order, "orders": est.orders}


@criterion("A10", "averaged force = -grad V_eff; Delta E independent of drive", 1.0)
def a10():
    rng = np.random.default_rng(20240501)
    thetas = rng.uniform(-np.pi, np.pi, 100)
    h = 1e-5
    worst = 0.0
    for p in (ReducedParams(0.005, math.sqrt(2) * 200, 200.0),
              ReducedParams(0.09, math.sqrt(2) * 200, 200.0, omega_L=0.3)):
        for th in thetas:
            acc = rhs_averaged(SpinState(float(th)), p).theta_ddot
            grad = (effective_potential(th + h, p) - effective_potential(th - h, p)) / (2 * h)
            worst = max(worst, abs(acc + grad) / abs(acc))
    dE = set()
    for k in range(10):
        gamma = 50.0 * (k + 1)
        p = ReducedParams(0.09, eps=0.3 * gamma * (k + 1), gamma=gamma)
        dE.add(classify_equilibria(p).delta_E_per_I.hex())
    return ({"gradient rel err < 1e-6": worst < 1e-6, "delta_E_per_I bit-identical": len(dE) == 1},
            {"worst_rel_err": worst, "distinct_delta_E": sorted(dE)})


@criterion("A11", "identity audit ratios 1/2 and 1/(4 pi), flagged", 1.0)
def a11():
    audit = physics.audit_identities(physics.PhysicalConstants.codata())
    return ({"Omega^2 ratio = 1/2 to 1e-9": abs(audit.omega_sq_ratio - 0.5) <= 1e-9 * 0.5,
             "B0 recipe ratio = 1/(4 pi) to 1e-9":
                 abs(audit.b0_recipe_ratio - 1 / (4 * math.pi)) <= 1e-9 / (4 * math.pi),
             "both flagged as discrepancies": audit.omega_sq_discrepancy and audit.b0_recipe_discrepancy},
            {"omega_sq_ratio": audit.omega_sq_ratio, "b0_recipe_ratio": audit.b0_recipe_ratio,
             "notes": list(audit.notes)})


def criterion_ids() -> list[str]:
    return list(_CRITERIA)


def run_criterion(cid: str, **kwargs) -> CriterionResult:
    title, budget, fn = _CRITERIA[cid]
    t0 = time.perf_counter()
    try:
        checks, detail = fn(**kwargs)
    except Exception as exc:
        checks, detail = {"ran without error": False}, {"error": f"{type(exc).__name__}: {exc}"}
    runtime = time.perf_counter() - t0
    checks = {k: bool(v) for k, v in checks.items()}
    checks[f"runtime < {budget:g}s"] = runtime < budget
    return CriterionResult(cid, title, all(checks.values()), runtime, budget, checks, detail)


def run_all(only: Optional[Iterable[str]] = None, parallel: int = 1) -> list[CriterionResult]:
    ids = list(only) if only else criterion_ids()
    unknown = [i for i in ids if i not in _CRITERIA]
    if unknown:
        raise KeyError(f"unknown criteria: {unknown}")
    warmup()
    _cache.clear()
    results = []
    for cid in ids:
        kwargs = {"parallel": parallel} if cid == "A2" else {}
        results.append(run_criterion(cid, **kwargs))
    return results
