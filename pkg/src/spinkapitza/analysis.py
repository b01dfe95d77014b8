"""
Effective potential, equilibrium classification and trajectory diagnostics.

Closed-form results for the averaged dynamics live next to the numerical
measurements that check them: slow/fast decomposition by a one-drive-period
moving average, zero-crossing frequency estimates, boundedness verdicts and
the stability sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .integrate import IntegratorConfig, Trajectory, integrate
from .model import (
    DimensionlessSpec,
    InvalidParametersError,
    ModelVariant,
    ReducedParams,
    SpinState,
    big_omega,
    from_dimensionless,
)

__all__ = [
    "ResolutionError",
    "InsufficientDataError",
    "EffectivePotentialCurve",
    "Equilibrium",
    "StabilityReport",
    "SlowFastDecomposition",
    "FrequencyEstimate",
    "BoundednessVerdict",
    "StabilityProbe",
    "SweepCell",
    "effective_potential",
    "potential_curve",
    "classify_equilibria",
    "slow_period",
    "predicted_fast_amplitude",
    "matched_driven_initial",
    "decompose_slow_fast",
    "measure_frequency",
    "is_bounded",
    "sweep_stability",
    "compare_full_vs_averaged",
]

MARGINAL_RTOL = 1e-12


class ResolutionError(ValueError):
    """Trajectory sampling too coarse (or too short) for the decomposition."""


class InsufficientDataError(ValueError):
    """Too few zero crossings to estimate an oscillation frequency."""


# ---------------------------------------------------------------------------
# effective potential

def effective_potential(theta, p: ReducedParams):
    """Averaged potential per unit inertia, ``omega0^2 cos + (Omega^2 - omega_L^2) sin^2 / 2``.

    Accepts scalars or arrays.
    """
    stiff = big_omega(p) ** 2 - p.omega_L**2
    return p.omega0_sq * np.cos(theta) + 0.5 * stiff * np.sin(theta) ** 2


@dataclass(frozen=True)
class EffectivePotentialCurve:
    thetas: np.ndarray
    u_values: np.ndarray
    a: float
    lambda_L: float

    def local_minima(self) -> np.ndarray:
        """Grid angles of strict local minima (the grid wraps at +-pi)."""
        u = self.u_values
        # [-pi, pi] has the same point at both ends; treat as periodic
        core = u[:-1] if np.isclose(self.thetas[0] + 2 * np.pi, self.thetas[-1]) else u
        left = np.roll(core, 1)
        right = np.roll(core, -1)
        idx = np.nonzero((core < left) & (core < right))[0]
        return self.thetas[idx]


def potential_curve(spec: DimensionlessSpec, n: int = 721) -> EffectivePotentialCurve:
    """Dimensionless potential ``U = a cos(theta) + (1 - lambda_L^2) sin^2(theta)`` on [-pi, pi].

    ``U = 2 V_eff / (I Omega^2)``; ``U(0) - U(pi) = 2a``.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    thetas = np.linspace(-np.pi, np.pi, n)
    u = spec.a * np.cos(thetas) + (1.0 - spec.lambda_L**2) * np.sin(thetas) ** 2
    return EffectivePotentialCurve(thetas, u, spec.a, spec.lambda_L)


# ---------------------------------------------------------------------------
# equilibria

@dataclass(frozen=True)
class Equilibrium:
    theta_star: float
    classification: str  # "stable" | "unstable" | "marginal"
    curvature: float  # d^2(V_eff/I)/d theta^2 at theta_star
    omega_small: Optional[float]


@dataclass(frozen=True)
class StabilityReport:
    equilibria: tuple
    condition_lhs: float
    condition_rhs: float
    omega_minus: Optional[float]
    omega_plus: Optional[float]
    delta_omega: float
    delta_omega_exact: Optional[float]
    delta_E_per_I: float

    def at(self, theta_star: float) -> Equilibrium:
        for eq in self.equilibria:
            if eq.theta_star == theta_star:
                return eq
        raise KeyError(theta_star)

    @property
    def both_stable(self) -> bool:
        return all(eq.classification == "stable" for eq in self.equilibria)

    def to_dict(self) -> dict:
        return asdict(self)


def _omega_pm_sq(omega0_sq: float, stiff: float) -> tuple[float, float]:
    """Squared small-oscillation frequencies (about pi, about 0)."""
    return stiff + omega0_sq, stiff - omega0_sq


def _classify(lhs: float, rhs: float) -> str:
    if abs(lhs - rhs) <= MARGINAL_RTOL * abs(rhs) or lhs == rhs:
        return "marginal"
    return "stable" if lhs < rhs else "unstable"


def classify_equilibria(p: ReducedParams) -> StabilityReport:
    """Classify the equilibria ``theta = 0, pi`` of the averaged dynamics.

    theta = 0 is stable iff ``omega0^2 + omega_L^2 < Omega^2``; theta = pi
    iff ``omega_L^2 - omega0^2 < Omega^2`` (always, in the planar case).
    Both conditions are the sign of the potential curvature, written in a
    form whose boundary is exact.
    """
    omega_sq = big_omega(p) ** 2
    stiff = omega_sq - p.omega_L**2
    w_plus_sq, w_minus_sq = _omega_pm_sq(p.omega0_sq, stiff)

    lhs0 = p.omega0_sq + p.omega_L**2
    lhs_pi = p.omega_L**2 - p.omega0_sq
    cls0 = _classify(lhs0, omega_sq)
    cls_pi = _classify(lhs_pi, omega_sq)
    w_minus = math.sqrt(w_minus_sq) if cls0 == "stable" and w_minus_sq > 0 else None
    w_plus = math.sqrt(w_plus_sq) if cls_pi == "stable" and w_plus_sq > 0 else None

    equilibria = (
        Equilibrium(0.0, cls0, w_minus_sq, w_minus),
        Equilibrium(math.pi, cls_pi, w_plus_sq, w_plus),
    )
    if w_minus is not None and w_plus is not None:
        # (w+^2 - w-^2) / (w+ + w-) avoids cancellation for tiny omega0
        dw_exact = (w_plus_sq - w_minus_sq) / (w_plus + w_minus)
    else:
        dw_exact = None
    dw_approx = p.omega0_sq / math.sqrt(stiff) if stiff > 0 else math.inf
    return StabilityReport(
        equilibria=equilibria,
        condition_lhs=lhs0,
        condition_rhs=omega_sq,
        omega_minus=w_minus,
        omega_plus=w_plus,
        delta_omega=dw_approx,
        delta_omega_exact=dw_exact,
        delta_E_per_I=2.0 * p.omega0_sq,
    )


def slow_period(p: ReducedParams) -> float:
    """Reference slow period: ``2 pi / omega_-``, else ``2 pi / omega0``, else ``2 pi / Omega``."""
    stiff = big_omega(p) ** 2 - p.omega_L**2
    w_minus_sq = stiff - p.omega0_sq
    for w in (math.sqrt(w_minus_sq) if w_minus_sq > 0 else 0.0, p.omega0, big_omega(p)):
        if w > 0:
            return 2.0 * math.pi / w
    return math.inf


# ---------------------------------------------------------------------------
# slow / fast separation

def predicted_fast_amplitude(Theta, p: ReducedParams):
    """First-order amplitude of the fast motion, ``(eps / gamma^2) sin(Theta)``.

    The fast component itself is ``-amplitude * cos(gamma t + phase)``.
    """
    if p.gamma <= 0:
        raise InvalidParametersError("gamma must be > 0")
    return (p.eps / p.gamma**2) * np.sin(Theta)


def matched_driven_initial(slow: SpinState, p: ReducedParams) -> SpinState:
    """Driven-model initial state whose slow part is ``slow``.

    Adds the first-order fast displacement and velocity at ``t = 0``.
    Without the velocity term a nonzero drive phase kicks the slow motion
    by ``O(Omega sin(Theta))``.
    """
    if p.eps == 0.0:
        return slow
    amp = float(predicted_fast_amplitude(slow.theta, p))
    xi0 = -amp * math.cos(p.drive_phase)
    xi_dot0 = amp * p.gamma * math.sin(p.drive_phase)
    return slow._replace(theta=slow.theta + xi0, theta_dot=slow.theta_dot + xi_dot0)


@dataclass(frozen=True)
class SlowFastDecomposition:
    times: np.ndarray
    slow_theta: np.ndarray
    fast_theta: np.ndarray
    window: float
    edge: np.ndarray  # True where the averaging window was truncated

    @property
    def interior(self) -> np.ndarray:
        return ~self.edge

    def reconstruct(self) -> np.ndarray:
        return self.slow_theta + self.fast_theta


def _running_mean(t: np.ndarray, x: np.ndarray, window: float):
    """Mean of the piecewise-linear interpolant of x over [t - w/2, t + w/2].

    Windows that stick out of the data are cut to the available part.
    Uses an exact cumulative integral of the interpolant, so for uniform
    sampling with an integer number of samples per window this is the
    trapezoid rule, which averages a sinusoid of that period to zero.
    """
    h = np.diff(t)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (x[1:] + x[:-1]))))

    def integral_to(s):
        k = np.clip(np.searchsorted(t, s, side="right") - 1, 0, len(t) - 2)
        ds = s - t[k]
        slope = (x[k + 1] - x[k]) / h[k]
        return cum[k] + x[k] * ds + 0.5 * slope * ds * ds

    lo = np.maximum(t - 0.5 * window, t[0])
    hi = np.minimum(t + 0.5 * window, t[-1])
    edge = (t - 0.5 * window < t[0] - 1e-12 * window) | (t + 0.5 * window > t[-1] + 1e-12 * window)
    return (integral_to(hi) - integral_to(lo)) / (hi - lo), edge


def _has_drive(traj: Trajectory) -> bool:
    return traj.variant.is_driven and traj.params.eps > 0


def decompose_slow_fast(traj: Trajectory) -> SlowFastDecomposition:
    """Split theta into a slow part (drive-period moving average) and a fast residual.

    For undriven variants, or zero drive, there is nothing to remove: the
    slow part is theta itself and the fast part is identically zero.

    Raises
    ------
    ResolutionError
        Fewer than 8 samples per drive period, or less than 3 drive periods.
    """
    t = traj.times
    theta = traj.theta
    if not _has_drive(traj):
        window = 2.0 * math.pi / traj.params.gamma if traj.params.gamma > 0 else 0.0
        return SlowFastDecomposition(t, theta.copy(), np.zeros_like(theta), window,
                                     np.zeros(len(t), dtype=bool))
    window = 2.0 * math.pi / traj.params.gamma
    if len(t) < 2:
        raise ResolutionError("trajectory has fewer than 2 samples")
    max_gap = float(np.max(np.diff(t)))
    # the last step may be a shorter remainder, so only the largest gap matters
    if max_gap > window / 8.0 * (1 + 1e-9):
        raise ResolutionError(
            f"sampling interval {max_gap:.3g} exceeds 1/8 of the drive period {window:.3g}")
    if t[-1] - t[0] < 3.0 * window:
        raise ResolutionError("trajectory shorter than 3 drive periods")
    slow, edge = _running_mean(t, theta, window)
    return SlowFastDecomposition(t, slow, theta - slow, window, edge)


# ---------------------------------------------------------------------------
# frequency and boundedness

@dataclass(frozen=True)
class FrequencyEstimate:
    omega_measured: float
    n_crossings: int
    uncertainty: float


def measure_frequency(times, slow_theta, theta_eq: float) -> FrequencyEstimate:
    """Angular frequency from linearly interpolated crossings of ``theta_eq``.

    ``omega = pi / mean(half period)``; the uncertainty is the standard
    error of the half periods carried through to omega.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(slow_theta, dtype=float) - theta_eq
    pos = x >= 0
    k = np.nonzero(pos[:-1] != pos[1:])[0]
    if len(k) < 4:
        raise InsufficientDataError(f"only {len(k)} crossings of theta_eq={theta_eq:g}; need 4")
    tc = t[k] - x[k] * (t[k + 1] - t[k]) / (x[k + 1] - x[k])
    half = np.diff(tc)
    mean_half = float(np.mean(half))
    sem = float(np.std(half, ddof=1) / math.sqrt(len(half)))
    omega = math.pi / mean_half
    return FrequencyEstimate(omega, int(len(k)), omega * sem / mean_half)


@dataclass(frozen=True)
class BoundednessVerdict:
    bounded: bool
    max_excursion: float
    t_exceeded: Optional[float]
    diverged: bool

    def __bool__(self):
        return self.bounded


def is_bounded(traj: Trajectory, theta_eq: float, excursion_limit: float,
               horizon: float) -> BoundednessVerdict:
    """Whether ``|theta - theta_eq|`` stays below ``excursion_limit`` up to ``horizon``.

    A trajectory that stopped early on divergence counts as unbounded.
    """
    mask = traj.times <= horizon * (1 + 1e-12)
    dev = np.abs(traj.theta[mask] - theta_eq)
    max_exc = float(np.max(dev)) if dev.size else 0.0
    over = np.nonzero(dev >= excursion_limit)[0]
    t_exc = float(traj.times[mask][over[0]]) if over.size else None
    diverged = traj.divergence is not None and traj.divergence.time <= horizon * (1 + 1e-12)
    if diverged and t_exc is None:
        t_exc = traj.divergence.time
    bounded = not diverged and not over.size
    return BoundednessVerdict(bounded, max_exc, t_exc, diverged)


# ---------------------------------------------------------------------------
# stability sweep

@dataclass(frozen=True)
class StabilityProbe:
    theta_eq: float = 0.0
    offset: float = 0.05
    excursion_limit: float = 0.5
    horizon_slow_periods: float = 100.0
    samples_per_slow_period: int = 200
    min_steps_per_drive_period: int = 40


@dataclass(frozen=True)
class SweepCell:
    index: int
    a: float
    gamma_ratio: float
    lambda_L: float
    analytic: str
    analytic_stable: bool
    empirical_bounded: Optional[bool]
    max_excursion: Optional[float]
    t_exceeded: Optional[float]
    horizon: Optional[float]
    error: str = ""

    @property
    def agreement(self) -> Optional[bool]:
        if self.empirical_bounded is None:
            return None
        return self.analytic_stable == self.empirical_bounded


def _run_cell(args) -> SweepCell:
    index, a, gamma_ratio, lambda_L, probe = args
    try:
        spec = DimensionlessSpec(a=a, gamma_ratio=gamma_ratio, lambda_L=lambda_L)
        p = from_dimensionless(spec)
    except (InvalidParametersError, ValueError) as exc:
        return SweepCell(index, a, gamma_ratio, lambda_L, "invalid", False, None, None, None,
                         None, str(exc))
    report = classify_equilibria(p)
    eq = report.at(0.0) if probe.theta_eq == 0.0 else report.at(math.pi)
    analytic = eq.classification
    try:
        period = slow_period(p)
        horizon = probe.horizon_slow_periods * period
        variant = ModelVariant.DRIVEN_1D if lambda_L == 0 else ModelVariant.FULL_2D
        cfg = IntegratorConfig(t_end=horizon, sample_dt=period / probe.samples_per_slow_period,
                               min_steps_per_drive_period=probe.min_steps_per_drive_period)
        traj = integrate(variant, SpinState(probe.theta_eq + probe.offset), p, cfg,
                         stop_excursion=(probe.theta_eq, probe.excursion_limit))
        verdict = is_bounded(traj, probe.theta_eq, probe.excursion_limit, horizon)
    except Exception as exc:  # recorded per cell, the sweep goes on
        return SweepCell(index, a, gamma_ratio, lambda_L, analytic, analytic == "stable",
                         None, None, None, None, f"{type(exc).__name__}: {exc}")
    return SweepCell(index, a, gamma_ratio, lambda_L, analytic, analytic == "stable",
                     verdict.bounded, verdict.max_excursion, verdict.t_exceeded, horizon)


def sweep_stability(a_grid: Sequence[float], gamma_ratio_grid: Sequence[float],
                    lambda_grid: Sequence[float] = (0.0,), probe: StabilityProbe = StabilityProbe(),
                    parallel: int = 1) -> list[SweepCell]:
    """Analytic and empirical stability verdict for every grid cell.

    Cells are ordered a-major, then gamma_ratio, then lambda_L, regardless
    of the order in which workers finish.
    """
    if not (len(a_grid) and len(gamma_ratio_grid) and len(lambda_grid)):
        raise ValueError("sweep grids must be non-empty")
    if parallel < 1:
        raise ValueError("parallel must be >= 1")
    jobs = []
    for a in a_grid:
        for g in gamma_ratio_grid:
            for lam in lambda_grid:
                jobs.append((len(jobs), float(a), float(g), float(lam), probe))
    if parallel == 1:
        cells = [_run_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            cells = list(pool.map(_run_cell, jobs))
    return sorted(cells, key=lambda c: c.index)


# ---------------------------------------------------------------------------
# averaged vs full dynamics

@dataclass(frozen=True)
class ComparisonMetrics:
    rms: float
    max: float
    n_samples: int


def compare_full_vs_averaged(spec: Union[DimensionlessSpec, ReducedParams], initial: SpinState,
                             horizon: float, min_steps_per_drive_period: int = 40) -> ComparisonMetrics:
    """Distance between the slow part of the driven run and the averaged run.

    ``initial`` is the slow state. The driven run starts from
    :func:`matched_driven_initial`; both runs use the same fixed step, so
    they share a sample grid. Edge samples of the moving average are
    excluded.
    """
    p = from_dimensionless(spec) if isinstance(spec, DimensionlessSpec) else spec
    initial = SpinState(*map(float, initial))
    planar = p.omega_L == 0.0
    driven = ModelVariant.DRIVEN_1D if planar else ModelVariant.FULL_2D
    averaged = ModelVariant.AVERAGED_1D if planar else ModelVariant.AVERAGED_2D

    cfg = IntegratorConfig(t_end=horizon, sample_stride=1,
                           min_steps_per_drive_period=min_steps_per_drive_period)
    from .integrate import resolve_dt

    dt = min(resolve_dt(p, cfg, driven, initial), resolve_dt(p, cfg, averaged, initial))
    cfg = IntegratorConfig(t_end=horizon, dt=dt, sample_stride=1,
                           min_steps_per_drive_period=min_steps_per_drive_period)
    full = integrate(driven, matched_driven_initial(initial, p), p, cfg)
    avg = integrate(averaged, initial, p, cfg)
    if full.diverged or avg.diverged:
        raise ResolutionError("a comparison run diverged")
    dec = decompose_slow_fast(full)
    n = min(len(full), len(avg))
    if not np.array_equal(full.times[:n], avg.times[:n]):
        raise ResolutionError("driven and averaged runs are not on a common grid")
    keep = dec.interior[:n]
    diff = dec.slow_theta[:n][keep] - avg.theta[:n][keep]
    return ComparisonMetrics(float(np.sqrt(np.mean(diff**2))), float(np.max(np.abs(diff))),
                             int(keep.sum()))
