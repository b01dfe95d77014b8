"""
Time integration for every model variant.

Two methods are available: classical fixed-step RK4 (the reference) and an
adaptive Dormand-Prince 5(4) pair. Both run as compiled loops over the
packed-parameter derivative in :mod:`spinkapitza.model`, so a run of a few
million drive-resolved steps takes well under a second.

Non-finite states are not errors: the run stops and the trajectory carries
a :class:`DivergenceReport`. Instability runs legitimately blow up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numba
import numpy as np

from .model import (
    DEFAULT_POLE_TOL,
    CoordinateSingularityError,
    InvalidParametersError,
    ModelVariant,
    ReducedParams,
    SpinState,
    big_omega,
    deriv_into,
    pack_params,
)

__all__ = [
    "ConfigurationError",
    "IntegratorConfig",
    "DivergenceReport",
    "Trajectory",
    "OrderEstimate",
    "resolve_dt",
    "integrate",
    "convergence_order",
]

FIXED_RK4 = "FixedRK4"
ADAPTIVE = "AdaptiveEmbedded"

# kernel status codes
_OK, _POLE, _DIVERGED, _EXCURSION, _MAXSTEPS = 0, 1, 2, 3, 4


class ConfigurationError(ValueError):
    """Invalid integrator configuration or no usable timescale."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings.

    Exactly one of ``sample_stride`` (keep every k-th step, plus the final
    one) and ``sample_dt`` (linear resampling onto ``k * sample_dt``) may be
    given. With neither, samples are taken at 200 per slow period.
    """

    t_end: float
    dt: float = 1.0
    method: str = FIXED_RK4
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    sample_stride: Optional[int] = None
    sample_dt: Optional[float] = None
    min_steps_per_drive_period: int = 40
    max_steps: int = 200_000_000

    def __post_init__(self):
        if self.method not in (FIXED_RK4, ADAPTIVE):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigurationError("t_end must be finite and > 0")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("dt must be finite and > 0")
        if self.method == ADAPTIVE and not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigurationError("rel_tol and abs_tol must be > 0")
        if self.sample_stride is not None and self.sample_dt is not None:
            raise ConfigurationError("give sample_stride or sample_dt, not both")
        if self.sample_stride is not None and int(self.sample_stride) < 1:
            raise ConfigurationError("sample_stride must be a positive integer")
        if self.sample_dt is not None and not (math.isfinite(self.sample_dt) and self.sample_dt > 0):
            raise ConfigurationError("sample_dt must be finite and > 0")
        if int(self.min_steps_per_drive_period) < 1:
            raise ConfigurationError("min_steps_per_drive_period must be >= 1")


@dataclass(frozen=True)
class DivergenceReport:
    reason: str  # "non-finite" or "excursion"
    time: float
    state: SpinState


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (n, 4): theta, theta_dot, phi, phi_dot
    params: ReducedParams
    variant: ModelVariant
    config: IntegratorConfig
    dt: float
    divergence: Optional[DivergenceReport] = None
    n_steps: int = 0
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def theta(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def theta_dot(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def phi(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def phi_dot(self) -> np.ndarray:
        return self.states[:, 3]

    @property
    def diverged(self) -> bool:
        return self.divergence is not None

    def state(self, i: int) -> SpinState:
        return SpinState(*(float(v) for v in self.states[i]))


def _slow_rates(p: ReducedParams) -> list[float]:
    omega_sq = big_omega(p) ** 2 - p.omega_L**2
    rates = [p.omega0, p.omega_L, math.sqrt(abs(omega_sq))]
    for w2 in (omega_sq + p.omega0_sq, omega_sq - p.omega0_sq):
        if w2 > 0:
            rates.append(math.sqrt(w2))
    return rates


def resolve_dt(p: ReducedParams, cfg: IntegratorConfig, variant: ModelVariant,
               initial: Optional[SpinState] = None) -> float:
    """Largest step allowed for ``variant`` under ``cfg``.

    Driven variants resolve the drive period with at least
    ``min_steps_per_drive_period`` steps; everything else uses 200 steps per
    slow period. ``initial`` lets an initial rotation rate count as a
    timescale (free rotor runs).
    """
    if variant.is_driven and p.eps > 0:
        dt = min(cfg.dt, (2.0 * math.pi / p.gamma) / cfg.min_steps_per_drive_period)
    else:
        rates = _slow_rates(p)
        if initial is not None:
            rates += [abs(initial.theta_dot), abs(initial.phi_dot)]
        fastest = max(rates)
        if not fastest > 1e-300:
            raise ConfigurationError("no dynamical timescale: omega0, Omega, omega_L are all zero")
        dt = min(cfg.dt, (2.0 * math.pi / fastest) / 200.0)
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigurationError(f"resolved dt is not usable: {dt!r}")
    return dt


# ---------------------------------------------------------------------------
# compiled loops

@numba.njit(cache=True)
def _all_finite(y):
    for k in range(y.shape[0]):
        if not math.isfinite(y[k]):
            return False
    return True


@numba.njit(cache=True)
def _rk4_step(code, t, y, h, pr, k1, k2, k3, k4, tmp, out):
    st = deriv_into(code, t, y, pr, k1)
    if st != 0:
        return st
    for i in range(4):
        tmp[i] = y[i] + 0.5 * h * k1[i]
    st = deriv_into(code, t + 0.5 * h, tmp, pr, k2)
    if st != 0:
        return st
    for i in range(4):
        tmp[i] = y[i] + 0.5 * h * k2[i]
    st = deriv_into(code, t + 0.5 * h, tmp, pr, k3)
    if st != 0:
        return st
    for i in range(4):
        tmp[i] = y[i] + h * k3[i]
    st = deriv_into(code, t + h, tmp, pr, k4)
    if st != 0:
        return st
    for i in range(4):
        out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return 0


@numba.njit(cache=True)
def _store(times, states, n, t, y):
    times[n] = t
    for i in range(4):
        states[n, i] = y[i]
    return n + 1


@numba.njit(cache=True)
def _store_resampled(times, states, n, k_next, sample_dt, t0, y0, t1, y1):
    # linear interpolation onto k * sample_dt for every grid point in (t0, t1]
    while n < times.shape[0]:
        ts = k_next * sample_dt
        if ts > t1:
            break
        w = (ts - t0) / (t1 - t0)
        times[n] = ts
        for i in range(4):
            states[n, i] = y0[i] + w * (y1[i] - y0[i])
        n += 1
        k_next += 1
    return n, k_next


@numba.njit(cache=True)
def _run_rk4(code, y0, pr, dt, n_full, t_end, stride, sample_dt, n_out,
             use_monitor, center, limit):
    times = np.empty(n_out)
    states = np.empty((n_out, 4))
    y = y0.copy()
    y_new = np.empty(4)
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    n = _store(times, states, 0, 0.0, y)
    k_next = 1
    partial = t_end - n_full * dt
    total = n_full + (1 if partial > 0.0 else 0)
    status = 0
    t = 0.0
    steps = 0
    for i in range(total):
        t = i * dt
        if i < n_full:
            h = dt
            t_new = (i + 1) * dt
        else:
            h = partial
            t_new = t_end
        st = _rk4_step(code, t, y, h, pr, k1, k2, k3, k4, tmp, y_new)
        if st != 0:
            status = st
            break
        if not _all_finite(y_new):
            status = 2
            break
        steps += 1
        last = i == total - 1
        hit = use_monitor and abs(y_new[0] - center) >= limit
        if sample_dt > 0.0:
            n, k_next = _store_resampled(times, states, n, k_next, sample_dt, t, y, t_new, y_new)
            if hit and n < times.shape[0] and times[n - 1] < t_new:
                n = _store(times, states, n, t_new, y_new)
        elif (i + 1) % stride == 0 or last or hit:
            n = _store(times, states, n, t_new, y_new)
        for k in range(4):
            y[k] = y_new[k]
        t = t_new
        if hit:
            status = 3
            break
    return times[:n], states[:n], status, t, y, steps


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = _DP_B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                          -92097 / 339200, 187 / 2100, 1 / 40])


@numba.njit(cache=True)
def _run_dopri(code, y0, pr, h0, h_max, t_end, rtol, atol, stride, sample_dt,
               max_steps, use_monitor, center, limit, A, B, C, E):
    cap = 1024
    times = np.empty(cap)
    states = np.empty((cap, 4))
    y = y0.copy()
    K = np.empty((7, 4))
    tmp = np.empty(4)
    y_new = np.empty(4)
    n = _store(times, states, 0, 0.0, y)
    k_next = 1
    t = 0.0
    h = min(h0, h_max, t_end)
    accepted = 0
    status = 0
    st = deriv_into(code, t, y, pr, K[0])
    if st != 0:
        return times[:n], states[:n], st, t, y, accepted
    while t < t_end:
        if accepted + 1 > max_steps:
            status = 4
            break
        if t + h > t_end:
            h = t_end - t
        for s in range(1, 7):
            for i in range(4):
                acc = 0.0
                for j in range(s):
                    acc += A[s, j] * K[j, i]
                tmp[i] = y[i] + h * acc
            st = deriv_into(code, t + C[s] * h, tmp, pr, K[s])
            if st != 0:
                break
        if st != 0:
            status = st
            break
        err = 0.0
        for i in range(4):
            acc = 0.0
            accE = 0.0
            for j in range(7):
                acc += B[j] * K[j, i]
                accE += E[j] * K[j, i]
            y_new[i] = y[i] + h * acc
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            e = h * accE / sc
            err += e * e
        err = math.sqrt(err / 4.0)
        if not math.isfinite(err) or not _all_finite(y_new):
            if h < 1e-14 * max(1.0, t):
                status = 2
                break
            h *= 0.2
            continue
        if err <= 1.0:
            t_new = t_end if t + h >= t_end else t + h
            accepted += 1
            hit = use_monitor and abs(y_new[0] - center) >= limit
            need = 4 + (int((t_new - t) / sample_dt) + 2 if sample_dt > 0.0 else 1)
            if n + need > times.shape[0]:
                new_cap = 2 * times.shape[0] + need
                t2 = np.empty(new_cap)
                s2 = np.empty((new_cap, 4))
                t2[:n] = times[:n]
                s2[:n] = states[:n]
                times = t2
                states = s2
            if sample_dt > 0.0:
                n, k_next = _store_resampled(times, states, n, k_next, sample_dt, t, y, t_new, y_new)
                if hit and times[n - 1] < t_new:
                    n = _store(times, states, n, t_new, y_new)
            elif accepted % stride == 0 or t_new >= t_end or hit:
                n = _store(times, states, n, t_new, y_new)
            # FSAL: last stage is the derivative at the new point
            for i in range(4):
                y[i] = y_new[i]
                K[0, i] = K[6, i]
            t = t_new
            if hit:
                status = 3
                break
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h = min(h * fac, h_max)
    return times[:n], states[:n], status, t, y, accepted


def _fixed_grid(t_end: float, dt: float) -> tuple[int, float]:
    """Number of full steps and the end time actually reached.

    A remainder within 1e-9 dt of the grid is absorbed instead of taking a
    sliver step; otherwise a shorter final step lands exactly on ``t_end``.
    """
    n_full = int(math.floor(t_end / dt))
    remainder = t_end - n_full * dt
    if remainder <= 1e-9 * dt:
        return n_full, n_full * dt
    if dt - remainder <= 1e-9 * dt:
        return n_full + 1, (n_full + 1) * dt
    return n_full, t_end


def _validate_variant(variant: ModelVariant, initial: SpinState, p: ReducedParams,
                      pole_tol: float) -> SpinState:
    if not all(math.isfinite(v) for v in initial):
        raise InvalidParametersError("initial state must be finite")
    if variant.is_planar and p.omega_L != 0.0:
        raise InvalidParametersError(f"{variant.value} is planar: omega_L must be 0")
    if variant in (ModelVariant.FULL_2D, ModelVariant.AVERAGED_2D):
        # phi_dot is held at the Larmor rate
        initial = initial._replace(phi_dot=p.omega_L)
    elif variant.is_planar:
        initial = initial._replace(phi_dot=0.0)
    if variant is ModelVariant.SPHERICAL_CONSERVED and initial.phi_dot != 0.0 \
            and abs(math.sin(initial.theta)) < pole_tol:
        raise CoordinateSingularityError(
            f"initial theta={initial.theta!r} is within the pole tolerance with phi_dot != 0")
    return initial


def _run(variant, initial, p, cfg, dt, sample_dt, stride, monitor, pole_tol):
    y0 = np.array(initial, dtype=np.float64)
    pr = pack_params(p, pole_tol)
    use_monitor = monitor is not None
    center, limit = monitor if use_monitor else (0.0, math.inf)
    if cfg.method == FIXED_RK4:
        n_full, t_end = _fixed_grid(cfg.t_end, dt)
        if n_full + 1 > cfg.max_steps:
            raise ConfigurationError(f"{n_full} steps exceed max_steps={cfg.max_steps}")
        if sample_dt > 0:
            n_out = int(math.floor(t_end / sample_dt)) + 3
        else:
            n_out = (n_full + 1) // stride + 4
        out = _run_rk4(variant.code, y0, pr, dt, n_full, t_end, stride, sample_dt,
                       n_out, use_monitor, center, limit)
    else:
        if variant.is_driven and p.eps > 0:
            h_max = (2.0 * math.pi / p.gamma) / 8.0
        else:
            h_max = 20.0 * resolve_dt(p, replace(cfg, dt=1e300), variant, initial)
        out = _run_dopri(variant.code, y0, pr, dt, h_max, cfg.t_end, cfg.rel_tol,
                         cfg.abs_tol, stride, sample_dt, cfg.max_steps, use_monitor,
                         center, limit, _DP_A, _DP_B, _DP_C, _DP_E)
    return out


def integrate(variant: ModelVariant, initial: SpinState, p: ReducedParams,
              cfg: IntegratorConfig, *, stop_excursion: Optional[tuple[float, float]] = None,
              pole_tol: float = DEFAULT_POLE_TOL) -> Trajectory:
    """Integrate ``variant`` from ``initial`` over ``[0, cfg.t_end]``.

    Parameters
    ----------
    stop_excursion : (center, limit), optional
        Stop as soon as ``|theta - center| >= limit``. The trajectory then
        ends at that step and carries a divergence report with reason
        ``"excursion"``.

    Raises
    ------
    CoordinateSingularityError
        Spherical variant reaching a pole with nonzero ``phi_dot``.
    ConfigurationError
        Unusable step or sampling settings.
    """
    initial = _validate_variant(variant, SpinState(*map(float, initial)), p, pole_tol)
    dt = resolve_dt(p, cfg, variant, initial)
    if cfg.sample_stride is not None:
        stride, sample_dt = int(cfg.sample_stride), 0.0
    elif cfg.sample_dt is not None:
        stride, sample_dt = 1, float(cfg.sample_dt)
    else:
        from .analysis import slow_period

        stride, sample_dt = 1, slow_period(p) / 200.0
        if not math.isfinite(sample_dt):
            stride, sample_dt = 1, 0.0

    times, states, status, t_last, y_last, steps = _run(
        variant, initial, p, cfg, dt, sample_dt, stride, stop_excursion, pole_tol)

    if status == _POLE:
        raise CoordinateSingularityError(
            f"trajectory reached |sin(theta)| < {pole_tol:g} near t={t_last!r}")
    if status == _MAXSTEPS:
        raise ConfigurationError(f"adaptive integration exceeded max_steps={cfg.max_steps}")
    if variant in (ModelVariant.FULL_2D, ModelVariant.AVERAGED_2D):
        # phi never feeds back into theta: write the exact precession angle
        states[:, 2] = initial.phi + p.omega_L * times
    divergence = None
    if status == _DIVERGED:
        divergence = DivergenceReport("non-finite", float(t_last), SpinState(*map(float, y_last)))
    elif status == _EXCURSION:
        divergence = DivergenceReport("excursion", float(t_last), SpinState(*map(float, y_last)))
    return Trajectory(times=np.ascontiguousarray(times), states=np.ascontiguousarray(states),
                      params=p, variant=variant, config=cfg, dt=dt, divergence=divergence,
                      n_steps=int(steps))


@dataclass(frozen=True)
class OrderEstimate:
    order: Optional[float]
    conclusive: bool
    differences: tuple
    orders: tuple
    reason: str = ""


def convergence_order(variant: ModelVariant, initial: SpinState, p: ReducedParams,
                      dt_list: Sequence[float], t_end: Optional[float] = None) -> OrderEstimate:
    """Observed global order of fixed-step RK4 by Richardson differences.

    With step sizes ``h, h/r, h/r^2, ...`` the endpoint differences
    ``d_k = |y(h_k) - y(h_{k+1})|`` shrink like ``r^-p``; the estimate is the
    last ``log(d_k / d_{k+1}) / log(r)``.

    ``dt_list`` is used as given (no drive-period capping).
    """
    dts = [float(h) for h in dt_list]
    if len(dts) < 3:
        raise ValueError("convergence_order needs at least 3 step sizes")
    ratios = [dts[k] / dts[k + 1] for k in range(len(dts) - 1)]
    if any(r <= 1 for r in ratios) or max(ratios) - min(ratios) > 1e-9 * max(ratios):
        raise ValueError("dt_list must be a decreasing geometric progression")
    r = ratios[0]
    initial = _validate_variant(variant, SpinState(*map(float, initial)), p, DEFAULT_POLE_TOL)
    if t_end is None:
        t_end = 1000 * dts[0]
    ends = []
    for h in dts:
        cfg = IntegratorConfig(t_end=t_end, dt=h, sample_stride=10**9)
        _, states, status, _, y_last, _ = _run(variant, initial, p, cfg, h, 0.0, 10**9,
                                               None, DEFAULT_POLE_TOL)
        if status != _OK:
            return OrderEstimate(None, False, (), (), "integration did not complete")
        ends.append(np.array(y_last))
    diffs = [float(np.max(np.abs(ends[k] - ends[k + 1]))) for k in range(len(ends) - 1)]
    scale = max(1.0, float(np.max(np.abs(ends[-1]))))
    if min(diffs) <= 1e-13 * scale:
        return OrderEstimate(None, False, tuple(diffs), (), "differences at round-off level")
    if any(diffs[k + 1] >= diffs[k] for k in range(len(diffs) - 1)):
        return OrderEstimate(None, False, tuple(diffs), (), "non-monotone error sequence")
    orders = tuple(math.log(diffs[k] / diffs[k + 1]) / math.log(r) for k in range(len(diffs) - 1))
    return OrderEstimate(orders[-1], True, tuple(diffs), orders)
