import math

import numpy as np
import pytest

from spinkapitza.analysis import slow_period
from spinkapitza.integrate import (
    ADAPTIVE,
    ConfigurationError,
    IntegratorConfig,
    convergence_order,
    integrate,
    resolve_dt,
)
from spinkapitza.model import (
    CoordinateSingularityError,
    DimensionlessSpec,
    InvalidParametersError,
    ModelVariant,
    ReducedParams,
    SpinState,
    azimuthal_momentum,
    energy_undriven,
    from_dimensionless,
)

V = ModelVariant
PENDULUM = ReducedParams(omega0_sq=1.0, eps=0.0, gamma=1.0)


def _zero_crossings(t, x):
    idx = np.nonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))[0]
    return t[idx] - x[idx] * (t[idx + 1] - t[idx]) / (x[idx + 1] - x[idx])


# ---------------------------------------------------------------------------
# step size rule

def test_resolve_dt_driven():
    p = ReducedParams(omega0_sq=0.01, eps=282.84, gamma=200.0)
    dt = resolve_dt(p, IntegratorConfig(t_end=1.0), V.DRIVEN_1D)
    assert dt == pytest.approx(2 * math.pi / 8000, rel=1e-15)
    assert resolve_dt(p, IntegratorConfig(t_end=1.0, dt=1e-5), V.DRIVEN_1D) == 1e-5


def test_resolve_dt_user_value_finer():
    assert resolve_dt(PENDULUM, IntegratorConfig(t_end=1.0, dt=1e-6), V.UNDRIVEN_1D) == 1e-6
    assert resolve_dt(PENDULUM, IntegratorConfig(t_end=1.0), V.UNDRIVEN_1D) == \
        pytest.approx(2 * math.pi / 200, rel=1e-15)


def test_resolve_dt_no_timescale():
    p = ReducedParams(omega0_sq=0.0, eps=0.0, gamma=1.0)
    with pytest.raises(ConfigurationError):
        resolve_dt(p, IntegratorConfig(t_end=1.0), V.UNDRIVEN_1D)
    with pytest.raises(ConfigurationError):
        integrate(V.DRIVEN_1D, SpinState(0.3), p, IntegratorConfig(t_end=1.0))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        IntegratorConfig(t_end=0.0)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(t_end=1.0, dt=-1.0)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(t_end=1.0, method="Euler")
    with pytest.raises(ConfigurationError):
        IntegratorConfig(t_end=1.0, sample_stride=2, sample_dt=0.1)
    with pytest.raises(ConfigurationError):
        IntegratorConfig(t_end=1.0, sample_stride=0)


# ---------------------------------------------------------------------------
# basic trajectories

def test_fixed_point_is_constant():
    traj = integrate(V.UNDRIVEN_1D, SpinState(math.pi), PENDULUM, IntegratorConfig(t_end=50.0))
    # sin(pi) = 1.2e-16 in floating point, so only round-off motion remains
    assert np.max(np.abs(traj.theta - math.pi)) < 1e-12
    assert np.max(np.abs(traj.theta_dot)) < 1e-12
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(50.0, abs=traj.dt)
    assert np.all(np.diff(traj.times) > 0)


def test_small_oscillation_period():
    traj = integrate(V.UNDRIVEN_1D, SpinState(math.pi - 0.01), PENDULUM,
                     IntegratorConfig(t_end=20 * 2 * math.pi, sample_stride=1))
    cross = _zero_crossings(traj.times, traj.theta - math.pi)
    period = 2 * np.mean(np.diff(cross))
    assert period == pytest.approx(2 * math.pi, rel=1e-3)


def test_driven_stabilized_near_upright():
    p = from_dimensionless(DimensionlessSpec(a=0.5, gamma_ratio=200.0))
    horizon = 100 * slow_period(p)
    traj = integrate(V.DRIVEN_1D, SpinState(0.05), p, IntegratorConfig(t_end=horizon))
    assert not traj.diverged
    assert np.max(np.abs(traj.theta)) < 0.5
    assert traj.times[-1] == pytest.approx(horizon, rel=1e-12)


def test_planar_variant_rejects_larmor():
    p = ReducedParams(0.1, 1.0, 10.0, omega_L=0.3)
    with pytest.raises(InvalidParametersError):
        integrate(V.DRIVEN_1D, SpinState(0.1), p, IntegratorConfig(t_end=1.0))


def test_two_dimensional_precession_is_exact():
    p = from_dimensionless(DimensionlessSpec(a=0.2, gamma_ratio=100.0, lambda_L=0.3))
    traj = integrate(V.FULL_2D, SpinState(0.1, 0.0, 0.25, 123.0), p, IntegratorConfig(t_end=30.0))
    assert np.all(traj.phi_dot == 0.3)
    assert np.array_equal(traj.phi, 0.25 + 0.3 * traj.times)


def test_spherical_pole_errors():
    p = ReducedParams(0.0, 0.0, 1.0)
    with pytest.raises(CoordinateSingularityError):
        integrate(V.SPHERICAL_CONSERVED, SpinState(0.0, 0.0, 0.0, 1.0), p,
                  IntegratorConfig(t_end=1.0))
    # with phi_dot = 0 the pole is harmless: theta_dot carries it straight through
    traj = integrate(V.SPHERICAL_CONSERVED, SpinState(0.0, 1.0, 0.0, 0.0), p,
                     IntegratorConfig(t_end=5.0, dt=0.01))
    assert traj.theta[-1] == pytest.approx(5.0, rel=1e-12)


def test_divergence_report_carries_last_finite_state():
    p = ReducedParams(omega0_sq=1.0, eps=1.0, gamma=10.0)
    traj = integrate(V.DRIVEN_1D, SpinState(0.0, 1e308), p, IntegratorConfig(t_end=10.0))
    rep = traj.divergence
    assert rep is not None and rep.reason == "non-finite"
    # the very first step overflows, so the last finite state is the initial one
    assert rep.time == 0.0
    assert rep.state == SpinState(0.0, 1e308)
    assert np.all(np.isfinite(traj.states))
    assert traj.times[-1] <= rep.time


def test_divergence_report_mid_run():
    p = ReducedParams(omega0_sq=1.0, eps=1.0, gamma=10.0)
    traj = integrate(V.DRIVEN_1D, SpinState(0.0, 1e307), p, IntegratorConfig(t_end=100.0))
    rep = traj.divergence
    assert rep is not None and rep.reason == "non-finite"
    assert 0.0 < rep.time < 100.0
    assert all(math.isfinite(v) for v in rep.state)
    assert np.all(np.isfinite(traj.states))


def test_excursion_stop():
    p = from_dimensionless(DimensionlessSpec(a=2.88, gamma_ratio=200.0))
    traj = integrate(V.DRIVEN_1D, SpinState(0.05), p, IntegratorConfig(t_end=200.0),
                     stop_excursion=(0.0, 0.5))
    assert traj.divergence.reason == "excursion"
    assert abs(traj.divergence.state.theta) >= 0.5
    assert traj.divergence.time < 200.0


# ---------------------------------------------------------------------------
# invariants

def test_determinism():
    p = from_dimensionless(DimensionlessSpec(a=0.18, gamma_ratio=200.0, drive_phase=0.4))
    cfg = IntegratorConfig(t_end=40.0, sample_stride=3)
    a = integrate(V.DRIVEN_1D, SpinState(0.05), p, cfg)
    b = integrate(V.DRIVEN_1D, SpinState(0.05), p, cfg)
    assert a.times.tobytes() == b.times.tobytes()
    assert a.states.tobytes() == b.states.tobytes()
    cfg = IntegratorConfig(t_end=40.0, method=ADAPTIVE)
    a = integrate(V.DRIVEN_1D, SpinState(0.05), p, cfg)
    b = integrate(V.DRIVEN_1D, SpinState(0.05), p, cfg)
    assert a.states.tobytes() == b.states.tobytes()


def test_energy_conservation():
    t_slow = 2 * math.pi
    traj = integrate(V.UNDRIVEN_1D, SpinState(2.0), PENDULUM,
                     IntegratorConfig(t_end=100 * t_slow, dt=t_slow / 1000, sample_stride=1))
    e = np.array([energy_undriven(traj.state(i), PENDULUM) for i in range(0, len(traj), 97)])
    assert np.max(np.abs(e - e[0])) / abs(e[0]) < 1e-8


def test_azimuthal_momentum_conservation():
    p = ReducedParams(0.0, 0.0, 1.0)
    init = SpinState(0.6, 0.8, 0.0, 1.5)
    period = 2 * math.pi / 1.5
    traj = integrate(V.SPHERICAL_CONSERVED, init, p,
                     IntegratorConfig(t_end=100 * period, dt=period / 2000))
    pphi = np.array([azimuthal_momentum(traj.state(i)) for i in range(len(traj))])
    assert np.max(np.abs(pphi - pphi[0])) / abs(pphi[0]) < 1e-8


def test_stride_grid():
    cfg = IntegratorConfig(t_end=10.0, dt=0.03, sample_stride=7)
    traj = integrate(V.UNDRIVEN_1D, SpinState(2.0), PENDULUM, cfg)
    n_full = int(10.0 // 0.03)
    expected = [k * 0.03 for k in range(0, n_full + 1, 7)] + [10.0]
    assert traj.times.tolist() == pytest.approx(expected, rel=1e-12)
    assert traj.times[-1] == 10.0


def test_resample_grid():
    cfg = IntegratorConfig(t_end=10.0, dt=0.03, sample_dt=0.25)
    traj = integrate(V.UNDRIVEN_1D, SpinState(2.0), PENDULUM, cfg)
    assert traj.times.tolist() == [k * 0.25 for k in range(41)]


def test_grid_absorbs_float_remainder():
    # 0.1 * 30 != 3.0 in floating point; no sliver step is taken
    slow = ReducedParams(omega0_sq=0.01, eps=0.0, gamma=1.0)
    traj = integrate(V.UNDRIVEN_1D, SpinState(2.0), slow,
                     IntegratorConfig(t_end=3.0, dt=0.1, sample_stride=1))
    assert traj.dt == 0.1
    assert len(traj) == 31
    assert np.allclose(np.diff(traj.times), 0.1, rtol=1e-12)


# ---------------------------------------------------------------------------
# adaptive method

def test_adaptive_matches_reference():
    ref = integrate(V.UNDRIVEN_1D, SpinState(2.5), PENDULUM,
                    IntegratorConfig(t_end=30.0, dt=1e-3, sample_dt=0.5))
    ad = integrate(V.UNDRIVEN_1D, SpinState(2.5), PENDULUM,
                   IntegratorConfig(t_end=30.0, method=ADAPTIVE, sample_dt=0.5,
                                    rel_tol=1e-10, abs_tol=1e-12))
    assert ad.times.tolist() == ref.times.tolist()
    # interior samples carry linear-resampling error of the large adaptive steps;
    # the end point is an actual step
    assert np.max(np.abs(ad.states[-1] - ref.states[-1])) < 1e-7
    assert np.max(np.abs(ad.states - ref.states)) < 1e-3
    assert ad.n_steps < ref.n_steps / 5


def test_adaptive_driven():
    p = from_dimensionless(DimensionlessSpec(a=0.18, gamma_ratio=50.0))
    ref = integrate(V.DRIVEN_1D, SpinState(0.05), p, IntegratorConfig(t_end=20.0, dt=1e-4, sample_stride=100))
    ad = integrate(V.DRIVEN_1D, SpinState(0.05), p,
                   IntegratorConfig(t_end=20.0, method=ADAPTIVE, rel_tol=1e-11, sample_stride=1))
    assert ad.times[-1] == ref.times[-1] == 20.0
    assert np.max(np.abs(ad.states[-1] - ref.states[-1])) < 1e-9


# ---------------------------------------------------------------------------
# convergence order

def test_convergence_order_rk4():
    est = convergence_order(V.UNDRIVEN_1D, SpinState(2.0), PENDULUM, [0.2, 0.1, 0.05, 0.025], t_end=10.0)
    assert est.conclusive
    assert 3.7 <= est.order <= 4.3


def test_convergence_order_fixed_point_inconclusive():
    est = convergence_order(V.UNDRIVEN_1D, SpinState(math.pi), PENDULUM, [0.2, 0.1, 0.05])
    assert not est.conclusive and est.order is None


def test_convergence_order_preconditions():
    with pytest.raises(ValueError):
        convergence_order(V.UNDRIVEN_1D, SpinState(2.0), PENDULUM, [0.2, 0.1])
    with pytest.raises(ValueError):
        convergence_order(V.UNDRIVEN_1D, SpinState(2.0), PENDULUM, [0.2, 0.1, 0.07])
