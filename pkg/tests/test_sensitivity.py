import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasecomb.curve import CLOSED_FORM, FringeCurve, phase_grid
from phasecomb.loop import LoopConfig, RamanDrive, fringe_scan
from phasecomb.sensitivity import (
    SensitivityReport,
    destruction_sweep,
    enhancement_decomposition,
    sensitivity,
    sql_benchmark,
    sql_benchmark_curve,
)

BRIGHT = 1e5


def _config(rf=0.3, rb=None, stark=0.0, **kw):
    rb = rf if rb is None else rb
    return LoopConfig(RamanDrive.from_squeeze(rf, stark), RamanDrive.from_squeeze(rb), **kw)


def _report(slope, noise_std, db, N_flux=4e13):
    sql = 1 / math.sqrt(N_flux)
    return SensitivityReport(0.0, slope, noise_std, sql * 10 ** (-db / 20), N_flux, sql, db)


# --- SQL --------------------------------------------------------------------

def test_sql_values():
    assert sql_benchmark(4e13) == pytest.approx(1.58e-7, rel=5e-3)
    assert f"{sql_benchmark(4e13):.1e}" == "1.6e-07"
    assert sql_benchmark(1.0) == 1.0
    assert sql_benchmark(1e14) == pytest.approx(1e-7, rel=1e-15)


@pytest.mark.parametrize("N", [0.0, -1.0, math.inf])
def test_sql_rejects_bad_flux(N):
    with pytest.raises(ValueError):
        sql_benchmark(N)


@pytest.mark.parametrize("N", [1e6, 1e10, 4e13])
def test_coherent_benchmark_reaches_the_sql(N):
    report = sensitivity(sql_benchmark_curve(N), N)
    assert report.delta_phi == pytest.approx(1 / math.sqrt(N), rel=1e-3)
    assert abs(report.db_beyond_sql) < 0.01


def test_benchmark_fringe_is_a_shot_noise_cosine():
    N = 1e8
    grid = phase_grid(256)
    curve = sql_benchmark_curve(N, grid)
    basis = np.column_stack([np.ones_like(grid), np.cos(grid), np.sin(grid)])
    coef, *_ = np.linalg.lstsq(basis, curve.signal, rcond=None)
    assert np.max(np.abs(basis @ coef - curve.signal)) < 1e-9 * math.hypot(coef[1], coef[2])
    mid = grid.size // 4  # phi = pi/2, half the light in each port
    assert curve.signal[mid] == pytest.approx(N / 2, rel=1e-12)
    assert curve.noise[mid] == pytest.approx(curve.signal[mid], rel=1e-6)
    np.testing.assert_array_equal(curve.particles, N)


# --- sensitivity ------------------------------------------------------------

def test_doubling_noise_scales_delta_phi():
    curve = sql_benchmark_curve(1e8, phase_grid(512))
    noisy = FringeCurve(curve.phi, curve.signal, 2 * curve.noise, curve.source, curve.particles)
    a, b = sensitivity(curve, 1e8), sensitivity(noisy, 1e8)
    assert b.delta_phi == pytest.approx(math.sqrt(2) * a.delta_phi, rel=1e-12)
    assert b.phi_opt == a.phi_opt


def test_flat_fringe_is_an_error():
    grid = phase_grid(64)
    flat = FringeCurve(grid, np.full(64, 5.0), np.full(64, 5.0))
    with pytest.raises(ValueError, match="zero everywhere"):
        sensitivity(flat, 1e6)


def test_sensitivity_needs_noise():
    grid = phase_grid(64)
    with pytest.raises(ValueError, match="noise"):
        sensitivity(FringeCurve(grid, 1 + np.cos(grid), source=CLOSED_FORM), 1e6)


def test_report_enforces_db_identity():
    with pytest.raises(ValueError):
        SensitivityReport(0.0, 1.0, 1.0, 1e-7, 1e14, 1e-7, 3.0)
    with pytest.raises(ValueError):
        SensitivityReport(0.0, 0.0, 1.0, 1e-7, 1e14, 1e-7, 0.0)


def test_loop_report_uses_phase_sensing_particles():
    cfg = _config(0.5, stark=0.3, gamma_a=0.6, seed=BRIGHT)
    curve = fringe_scan(cfg, phase_grid(512))
    a, b = sensitivity(curve, 1e10), sensitivity(curve, 4e13)
    # flux only rescales both sides of the SQL comparison
    assert a.db_beyond_sql == pytest.approx(b.db_beyond_sql, abs=1e-12)
    i = int(np.argmin(np.abs(curve.phi - a.phi_opt)))
    per_shot = a.noise_std / a.slope
    assert a.db_beyond_sql == pytest.approx(-20 * math.log10(per_shot * math.sqrt(curve.particles[i])), abs=1e-9)


# --- destruction sweep ------------------------------------------------------

def test_destruction_sweep_over_the_measured_range():
    cfg = _config(0.5, stark=0.3, gamma_a=0.6, seed=BRIGHT)
    sweep = destruction_sweep(cfg, [1.0, 2.0, 4.0, 8.5])
    first = sweep.rows[0]
    assert (first.loss, first.signal_db, first.noise_db) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
    assert sweep.rows[-1].loss == pytest.approx(0.8824, abs=1e-4)
    for row in sweep.rows:
        assert row.loss == pytest.approx(1 - 1 / row.power_gain, abs=1e-12)
    assert np.max(np.abs(sweep.signal_db)) < 1e-6
    assert np.all(np.diff(sweep.noise_db) > 0)


@given(st.floats(0.1, 0.5), st.floats(0.0, 1.0), st.floats(0.7, 1.0))
@settings(max_examples=8, deadline=None)
def test_destruction_monotonicity(r, stark, gamma):
    cfg = _config(r, stark=stark, gamma_a=gamma, seed=BRIGHT)
    sweep = destruction_sweep(cfg, np.linspace(1, 10, 7))
    assert np.max(np.abs(sweep.signal_db)) < 1e-6
    assert np.all(np.diff(sweep.noise_db) >= 0)


def test_destruction_sweep_rejects_bad_gains():
    with pytest.raises(ValueError):
        destruction_sweep(_config(seed=1.0), [0.5])
    with pytest.raises(ValueError):
        destruction_sweep(_config(seed=1.0), [])


def test_destruction_phase_defaults_to_steepest_point():
    cfg = _config(0.5, stark=0.3, gamma_a=0.6, seed=BRIGHT)
    explicit = destruction_sweep(cfg, [2.0], phi=1.0)
    assert explicit.phi == 1.0
    assert destruction_sweep(cfg, [2.0]).phi != 1.0


# --- decomposition ----------------------------------------------------------

def test_decomposition_of_a_13_3_db_slope_gain():
    bench = _report(slope=1.0, noise_std=1.0, db=0.0)
    hybrid = _report(slope=10 ** (13.3 / 20), noise_std=10 ** (5.0 / 20), db=8.3)
    out = enhancement_decomposition(hybrid, bench, 2.3)
    assert out.signal_enh_db == pytest.approx(13.3, abs=1e-12)
    assert out.amplification_db == pytest.approx(20 * math.log10(2.3), abs=1e-12)
    assert out.comb_db == pytest.approx(6.0, abs=0.1)
    assert out.correlation_db == pytest.approx(2.3, abs=0.1)
    assert out.noise_excess_db == pytest.approx(5.0, abs=1e-12)
    assert out.signal_enh_db == pytest.approx(out.amplification_db + out.comb_db, abs=1e-12)


def test_identical_reports_decompose_to_zero():
    r = _report(3.0, 2.0, 1.5)
    assert enhancement_decomposition(r, r, 1.0).as_tuple() == pytest.approx((0, 0, 0, 0, 0), abs=1e-12)


def test_decomposition_rejects_mismatched_flux():
    with pytest.raises(ValueError, match="flux"):
        enhancement_decomposition(_report(1, 1, 0, 1e10), _report(1, 1, 0, 1e12), 1.0)


@given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(-5, 15), st.floats(1.0, 10.0))
def test_decomposition_identity(slope, noise, db, ratio):
    out = enhancement_decomposition(_report(slope, noise, db), _report(1.0, 1.0, 0.0), ratio)
    assert out.signal_enh_db == pytest.approx(out.amplification_db + out.comb_db, abs=1e-12)
