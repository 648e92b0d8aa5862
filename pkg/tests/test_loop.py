import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasecomb.curve import phase_grid
from phasecomb.loop import (
    AtomicPhaseProbe,
    Insertion,
    LoopConfig,
    NonConvergenceError,
    RamanDrive,
    atomic_phase,
    fringe_scan,
    run_loop,
    steady_state,
)

BRIGHT = 1e5


def _config(rf=0.3, rb=None, stark=0.0, **kw):
    rb = rf if rb is None else rb
    return LoopConfig(RamanDrive.from_squeeze(rf, stark), RamanDrive.from_squeeze(rb), **kw)


def _memory_energy_oracle(r, T_s, gamma, phi, loops):
    """Scalar recursion for the retained atomic photon number from an empty memory.

    With vacuum inputs the memory stays phase-insensitive, so one round trip is
    a_out = u a + (creation operators of fresh vacua) and
    E' = (1 - gamma) (|u|^2 E + |k|^2 + sinh^2 r_b (1 - T_s)).
    """
    c, s, t = math.cosh(r), math.sinh(r), math.sqrt(T_s)
    u = c * c + s * s * t * np.exp(-1j * phi)
    k = c * s + s * c * t * np.exp(-1j * phi)
    E, seq = 0.0, []
    for _ in range(loops):
        E = (1 - gamma) * (abs(u) ** 2 * E + abs(k) ** 2 + s * s * (1 - T_s))
        seq.append(E)
    return np.array(seq)


# --- run_loop ---------------------------------------------------------------

def test_zero_gain_outputs_vacuum():
    trace = run_loop(_config(0.0), loops=5)
    assert all(rec.signal == 0.0 and rec.noise == 0.0 for rec in trace.records)
    state, used = steady_state(_config(0.0))
    np.testing.assert_array_equal(state.mean, 0.0)
    np.testing.assert_allclose(state.cov, np.eye(2), atol=1e-15)
    assert used == 1


@pytest.mark.parametrize("seed", [0j, 3.0 - 1.0j])
def test_full_reset_makes_round_trips_identical(seed):
    trace = run_loop(_config(0.5, stark=0.4, gamma_a=1.0, phi=0.7, seed=seed), loops=6)
    first = trace.records[0]
    for rec in trace.records[1:]:
        assert (rec.signal, rec.noise, rec.atomic_amplitude) == (
            first.signal,
            first.noise,
            first.atomic_amplitude,
        )
        assert (rec.optical_arm_photons, rec.atomic_arm_photons) == (
            first.optical_arm_photons,
            first.atomic_arm_photons,
        )
    assert trace.records[1].residual == 0.0


@pytest.mark.parametrize("phi", [0.0, 0.9, np.pi])
def test_memory_energy_matches_scalar_recursion(phi):
    # r = 0.3, T_s = 0.9, gamma_a = 0.2 runs away near phi = 0, so compare the sequence itself
    cfg = _config(0.3, T_s=0.9, gamma_a=0.2, phi=phi)
    trace = run_loop(cfg, loops=200)
    oracle = _memory_energy_oracle(0.3, 0.9, 0.2, phi, 200)
    got = np.array([rec.memory_photons for rec in trace.records])
    np.testing.assert_allclose(got, oracle, rtol=1e-9, atol=0)


def test_memory_energy_reaches_scalar_fixed_point():
    phi = np.pi
    # the stopping rule bounds the per-loop change, not the distance to the fixed point
    cfg = _config(0.3, T_s=0.9, gamma_a=0.2, phi=phi, steady_tol=1e-14)
    trace = run_loop(cfg)
    assert trace.converged
    c, s, t = math.cosh(0.3), math.sinh(0.3), math.sqrt(0.9)
    u2 = abs(c * c + s * s * t * np.exp(-1j * phi)) ** 2
    k2 = abs(c * s * (1 + t * np.exp(-1j * phi))) ** 2
    fixed = 0.8 * (k2 + s * s * 0.1) / (1 - 0.8 * u2)
    assert trace.last.memory_photons == pytest.approx(fixed, rel=1e-9)
    assert trace.last.memory_photons == pytest.approx(
        _memory_energy_oracle(0.3, 0.9, 0.2, phi, 5000)[-1], rel=1e-9
    )


def test_steady_state_is_tolerance_independent():
    cfg = _config(0.4, stark=0.2, gamma_a=0.8, phi=1.1, seed=2.0)
    loose, _ = steady_state(cfg.with_(steady_tol=1e-9))
    tight, _ = steady_state(cfg.with_(steady_tol=1e-12))
    np.testing.assert_allclose(loose.mean, tight.mean, rtol=1e-8)
    np.testing.assert_allclose(loose.cov, tight.cov, rtol=1e-8)


def test_fixed_point_is_absorbing():
    cfg = _config(0.4, gamma_a=0.5, phi=0.5)
    state, used = steady_state(cfg)
    again, used_again = steady_state(cfg.with_(J_max=2 * cfg.J_max))
    np.testing.assert_array_equal(state.mean, again.mean)
    np.testing.assert_array_equal(state.cov, again.cov)
    assert used == used_again


def test_residual_tail_stays_below_tolerance():
    cfg = _config(0.35, stark=0.3, gamma_a=0.5, seed=1.0)
    _, used = steady_state(cfg)
    trace = run_loop(cfg, loops=used + 50)
    tail = np.array([rec.residual for rec in trace.records[used - 1 :]])
    assert np.all(np.isfinite(tail))
    assert np.all(tail < 1.1 * cfg.steady_tol)


def test_traces_are_deterministic():
    cfg = _config(0.3, stark=0.2, gamma_a=0.4, seed=1 + 1j, phi=0.3)
    assert run_loop(cfg).records == run_loop(cfg).records


def test_above_threshold_is_reported():
    cfg = _config(1.0, gamma_a=0.1, J_max=500)
    assert not cfg.below_threshold()
    with pytest.raises(NonConvergenceError) as err:
        steady_state(cfg)
    assert err.value.phis == (0.0,)
    assert err.value.residual > cfg.steady_tol


def test_fringe_scan_lists_failing_phases():
    cfg = _config(0.6, gamma_a=0.3, J_max=2000)
    with pytest.raises(NonConvergenceError) as err:
        fringe_scan(cfg, phase_grid(16))
    assert 0 < len(err.value.phis) <= 16
    assert 0.0 in err.value.phis


@given(
    st.floats(0.0, 0.6),
    st.floats(0.0, 0.6),
    st.floats(0.05, 1.0),
    st.floats(0.0, 2 * np.pi),
)
@settings(max_examples=25, deadline=None)
def test_steady_state_exists_below_threshold(rf, rb, gamma, phi):
    # margin keeps the convergence time well inside J_max
    if (1 - gamma) * math.cosh(rf + rb) ** 2 > 0.99:
        return
    trace = run_loop(_config(rf, rb, gamma_a=gamma, phi=phi, seed=1.0, steady_tol=1e-9))
    assert trace.converged
    assert trace.loops_used <= 10_000


# --- fringe_scan ------------------------------------------------------------

def test_zero_gain_fringe_is_flat_zero():
    curve = fringe_scan(_config(0.0), phase_grid(32))
    np.testing.assert_allclose(curve.signal, 0.0, atol=1e-15)


@pytest.mark.parametrize("seed", [0j, BRIGHT])
def test_single_pass_fringe_is_a_cosine(seed):
    grid = phase_grid(256)
    curve = fringe_scan(_config(0.5, rb=0.7, stark=0.4, gamma_a=1.0, T_s=0.8, seed=seed), grid)
    basis = np.column_stack([np.ones_like(grid), np.cos(grid), np.sin(grid)])
    coef, *_ = np.linalg.lstsq(basis, curve.signal, rcond=None)
    amplitude = math.hypot(coef[1], coef[2])
    assert amplitude > 0
    assert np.max(np.abs(basis @ coef - curve.signal)) < 1e-9 * amplitude


def test_fringe_is_two_pi_periodic():
    cfg = _config(0.2, stark=0.3, gamma_a=0.3, seed=1.0)
    grid = phase_grid(32)
    a = fringe_scan(cfg, grid)
    b = fringe_scan(cfg, grid + 2 * np.pi)
    np.testing.assert_allclose(a.signal, b.signal, rtol=1e-10)
    np.testing.assert_allclose(a.noise, b.noise, rtol=1e-10)


def test_fringe_scan_matches_pointwise_runs():
    cfg = _config(0.3, stark=0.2, gamma_a=0.3, seed=2.0)
    grid = phase_grid(8)
    curve = fringe_scan(cfg, grid)
    for phi, signal, noise in zip(grid, curve.signal, curve.noise):
        last = run_loop(cfg.with_(phi=float(phi))).last
        assert (last.signal, last.noise) == pytest.approx((signal, noise), rel=1e-13)


def test_transient_fringe_uses_fixed_loop_count():
    cfg = _config(0.3, gamma_a=0.3, seed=2.0)
    grid = phase_grid(8)
    curve = fringe_scan(cfg, grid, loops=3)
    last = run_loop(cfg.with_(phi=float(grid[2])), loops=3).last
    assert curve.signal[2] == pytest.approx(last.signal, rel=1e-13)
    assert curve.particles[2] == pytest.approx(last.phase_sensing_particles, rel=1e-13)


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        fringe_scan(_config(), [])


# --- insertion --------------------------------------------------------------

def test_insertion_keeps_signal_and_adds_noise():
    base = _config(0.4, stark=0.3, gamma_a=0.5, seed=BRIGHT)
    grid = phase_grid(64)
    plain = fringe_scan(base, grid)
    for power_gain in (2.0, 8.5):
        boosted = fringe_scan(base.with_(insertion=Insertion.intensity_preserving(power_gain)), grid)
        np.testing.assert_allclose(boosted.signal, plain.signal, rtol=1e-9)
        assert np.all(boosted.noise > plain.noise)


def test_intensity_preserving_insertion():
    ins = Insertion.intensity_preserving(8.5)
    assert ins.loss == pytest.approx(1 - 1 / 8.5, abs=1e-12)
    assert ins.amplitude_factor == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        Insertion(0.5, 0.0)
    with pytest.raises(ValueError):
        Insertion(1.2, 1.0)


# --- configuration ----------------------------------------------------------

def test_raman_drive_gain_and_stark_phase():
    drive = RamanDrive(pump_amplitude=2.0, detuning=4.0, c_eta=1.0, c_zeta=0.5, interaction_time=3.0)
    assert drive.squeeze == pytest.approx(1.5)
    assert drive.gain == pytest.approx(math.cosh(1.5))
    assert drive.stark_phase == pytest.approx(0.5 * 4.0 / 4.0 * 3.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(pump_amplitude=0.0, detuning=1.0),
        dict(pump_amplitude=1.0, detuning=0.0),
        dict(pump_amplitude=1.0, detuning=-1.0),
        dict(pump_amplitude=1.0, detuning=1.0, interaction_time=0.0),
    ],
)
def test_raman_drive_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        RamanDrive(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [dict(T_s=0.0), dict(T_s=1.2), dict(gamma_a=-0.1), dict(gamma_a=1.5), dict(phi=math.inf), dict(J_max=0)],
)
def test_loop_config_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        _config(**kwargs)


def test_threshold_for_lossless_arm():
    cfg = _config(0.3, rb=0.5, gamma_a=0.2)
    assert cfg.round_trip_gain() == pytest.approx(math.sqrt(0.8) * math.cosh(0.8))


# --- atomic phase -----------------------------------------------------------

def test_atomic_phase_formula():
    assert atomic_phase(AtomicPhaseProbe(I_p=0.0, Delta_p=3.0)) == 0.0
    assert atomic_phase(AtomicPhaseProbe(I_p=2.0, Delta_p=4.0, tau=1.0, c_probe=1.0)) == pytest.approx(0.5)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_atomic_phase_scaling(power, detuning):
    base = atomic_phase(AtomicPhaseProbe(power, detuning, tau=0.3))
    assert atomic_phase(AtomicPhaseProbe(2 * power, detuning, tau=0.3)) == pytest.approx(2 * base)
    assert atomic_phase(AtomicPhaseProbe(power, 2 * detuning, tau=0.3)) == pytest.approx(base / 2)


def test_atomic_phase_rejects_zero_detuning():
    with pytest.raises(ValueError):
        atomic_phase(AtomicPhaseProbe(1.0, 0.0))
