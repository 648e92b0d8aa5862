"""
Phase sensitivity against the standard quantum limit.

Conventions
-----------
Amplitude-like ratios (phase uncertainty, slope, field gain) are quoted as
20 log10; power-like ratios (photon number, variance) as 10 log10.

One simulated steady state is one shot.  A shot with N_shot phase-sensing
particles and uncertainty d_shot maps onto a flux N_flux per second as

    delta_phi = d_shot * sqrt(N_shot / N_flux)   [rad / sqrt(Hz)],

so a coherent interferometer lands exactly on sql = 1 / sqrt(N_flux) and
db_beyond_sql = -20 log10(d_shot * sqrt(N_shot)) is independent of the flux.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from phasecomb.comb import fringe_slope
from phasecomb.curve import BENCHMARK, FringeCurve, phase_grid
from phasecomb.gaussian import (
    apply,
    beam_splitter,
    coherent,
    compose,
    phase_shift,
    photon_stats,
    vacuum,
)
from phasecomb.loop import Insertion, LoopConfig, fringe_scan

# slopes below this fraction of the steepest one are treated as flat
FLAT_SLOPE = 1e-9
DB_IDENTITY_TOL = 1e-9


def _db_amplitude(ratio: float) -> float:
    return 20.0 * math.log10(ratio)


def _db_power(ratio: float) -> float:
    return 10.0 * math.log10(ratio)


@dataclass(frozen=True)
class SensitivityReport:
    """Best phase sensitivity of one fringe, normalized to a particle flux.

    ``slope`` is in photons per rad and ``noise_std`` in photons, both at
    ``phi_opt``; ``delta_phi`` and ``sql`` are in rad per sqrt(Hz).
    """

    phi_opt: float
    slope: float
    noise_std: float
    delta_phi: float
    N_flux: float
    sql: float
    db_beyond_sql: float

    def __post_init__(self):
        if not self.delta_phi > 0:
            raise ValueError(f"delta_phi must be positive, got {self.delta_phi}")
        if not self.slope > 0:
            raise ValueError(f"slope must be positive at the operating point, got {self.slope}")
        if not self.N_flux > 0:
            raise ValueError(f"N_flux must be positive, got {self.N_flux}")
        expected = _db_amplitude(self.sql / self.delta_phi)
        if not math.isclose(self.db_beyond_sql, expected, rel_tol=0, abs_tol=DB_IDENTITY_TOL):
            raise ValueError(
                f"db_beyond_sql {self.db_beyond_sql} disagrees with 20 log10(sql / delta_phi) = {expected}"
            )


def sql_benchmark(N_flux: float) -> float:
    """Standard quantum limit 1/sqrt(N) in rad per sqrt(Hz)."""
    if not N_flux > 0 or not math.isfinite(N_flux):
        raise ValueError(f"particle flux must be positive and finite, got {N_flux}")
    return 1.0 / math.sqrt(N_flux)


def sensitivity(curve: FringeCurve, N_flux: float) -> SensitivityReport:
    """Best delta_phi = sqrt(noise) / |slope| on the curve, scaled to ``N_flux``.

    Curves without a ``particles`` column are taken to carry ``N_flux``
    particles per shot.
    """
    if curve.noise is None:
        raise ValueError("sensitivity needs a fringe with a noise column")
    sql = sql_benchmark(N_flux)
    slope = np.abs(fringe_slope(curve))
    steepest = float(np.max(slope))
    if steepest == 0.0:
        raise ValueError("fringe slope is zero everywhere; the phase is not measurable")
    usable = slope > FLAT_SLOPE * steepest
    particles = curve.particles if curve.particles is not None else np.full(len(curve), N_flux)
    per_shot = np.full(len(curve), np.inf)
    per_shot[usable] = np.sqrt(curve.noise[usable]) / slope[usable]
    delta = per_shot * np.sqrt(particles / N_flux)
    i = int(np.argmin(delta))
    if not delta[i] > 0:
        raise ValueError(f"noiseless fringe point at phi={curve.phi[i]:.6g}; sensitivity is unbounded")
    return SensitivityReport(
        phi_opt=float(curve.phi[i]),
        slope=float(slope[i]),
        noise_std=float(np.sqrt(curve.noise[i])),
        delta_phi=float(delta[i]),
        N_flux=float(N_flux),
        sql=sql,
        db_beyond_sql=_db_amplitude(sql / float(delta[i])),
    )


def sql_benchmark_curve(N_flux: float, phi_grid: Sequence[float] | None = None) -> FringeCurve:
    """Coherent-state Mach-Zehnder fringe carrying ``N_flux`` photons per shot.

    A coherent input with mean photon number N_flux is split 50:50, one arm
    picks up phi, and the arms recombine on a second 50:50 splitter; the
    signal is the photon number of one output port.
    """
    sql_benchmark(N_flux)
    phis = phase_grid() if phi_grid is None else np.asarray(phi_grid, dtype=float).reshape(-1)
    source = coherent(math.sqrt(N_flux), "laser").join(vacuum(1, ["dark"]))
    splitter = beam_splitter(0.5)
    signal = np.empty_like(phis)
    noise = np.empty_like(phis)
    for i, phi in enumerate(phis):
        out = apply(compose(splitter, phase_shift(float(phi), 0, 2), splitter), source)
        signal[i], noise[i] = photon_stats(out, 0)
    return FringeCurve(phis, signal, noise, BENCHMARK, np.full_like(phis, N_flux))


@dataclass(frozen=True)
class DestructionRow:
    power_gain: float
    loss: float
    signal_db: float
    noise_db: float


@dataclass(frozen=True)
class DestructionSweep:
    """Output signal and noise with an intensity-preserving amplifier and attenuator.

    Both columns are 10 log10 ratios against the run without insertion.
    """

    phi: float
    rows: tuple[DestructionRow, ...]

    @property
    def power_gains(self) -> np.ndarray:
        return np.array([r.power_gain for r in self.rows])

    @property
    def signal_db(self) -> np.ndarray:
        return np.array([r.signal_db for r in self.rows])

    @property
    def noise_db(self) -> np.ndarray:
        return np.array([r.noise_db for r in self.rows])


def steepest_phase(config: LoopConfig, points: int = 512) -> float:
    """Phase of the steepest point of the steady-state fringe."""
    curve = fringe_scan(config, phase_grid(points))
    return float(curve.phi[int(np.argmax(np.abs(fringe_slope(curve))))])


def destruction_sweep(
    config: LoopConfig, gains: Sequence[float], phi: float | None = None
) -> DestructionSweep:
    """Insert amplifier G_AM and attenuator l = 1 - 1/G_AM^2 into the optical arm.

    ``gains`` are power gains G_AM^2 >= 1.  The evaluation phase defaults to
    the steepest point of the fringe without insertion.
    """
    gains = [float(g) for g in gains]
    if not gains:
        raise ValueError("no gains to sweep")
    if any(not g >= 1.0 for g in gains):
        raise ValueError(f"power gains must be >= 1, got {gains}")
    base = config.with_(insertion=None)
    if phi is None:
        phi = steepest_phase(base)
    reference = fringe_scan(base, [phi])
    signal0, noise0 = float(reference.signal[0]), float(reference.noise[0])
    if signal0 <= 0 or noise0 <= 0:
        raise ValueError(f"no output light at phi={phi:.6g}; pick another evaluation phase")

    rows = []
    for g in gains:
        insertion = Insertion.intensity_preserving(g)
        point = fringe_scan(base.with_(insertion=insertion), [phi])
        rows.append(
            DestructionRow(
                power_gain=g,
                loss=insertion.loss,
                signal_db=_db_power(float(point.signal[0]) / signal0),
                noise_db=_db_power(float(point.noise[0]) / noise0),
            )
        )
    return DestructionSweep(float(phi), tuple(rows))


@dataclass(frozen=True)
class EnhancementBreakdown:
    """Where the hybrid's advantage over the benchmark comes from, in dB.

    signal_enh_db = amplification_db + comb_db, and the sensitivity gain over
    the benchmark splits into comb_db + correlation_db.
    """

    signal_enh_db: float
    amplification_db: float
    comb_db: float
    noise_excess_db: float
    correlation_db: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (
            self.signal_enh_db,
            self.amplification_db,
            self.comb_db,
            self.noise_excess_db,
            self.correlation_db,
        )


def enhancement_decomposition(
    hybrid: SensitivityReport, benchmark: SensitivityReport, recombine_gain_ratio: float
) -> EnhancementBreakdown:
    """Split the slope enhancement into recombination gain and phase comb.

    ``recombine_gain_ratio`` is the output-to-input intensity ratio of the
    recombining amplifier, quoted as 20 log10 like a field gain.
    """
    if not math.isclose(hybrid.N_flux, benchmark.N_flux, rel_tol=1e-12):
        raise ValueError(
            f"reports use different particle fluxes ({hybrid.N_flux:.6g} vs {benchmark.N_flux:.6g})"
        )
    if not recombine_gain_ratio > 0:
        raise ValueError(f"gain ratio must be positive, got {recombine_gain_ratio}")
    signal_enh = _db_amplitude(hybrid.slope / benchmark.slope)
    amplification = _db_amplitude(recombine_gain_ratio)
    comb = signal_enh - amplification
    noise_excess = _db_amplitude(hybrid.noise_std / benchmark.noise_std)
    correlation = (hybrid.db_beyond_sql - benchmark.db_beyond_sql) - comb
    return EnhancementBreakdown(signal_enh, amplification, comb, noise_excess, correlation)
