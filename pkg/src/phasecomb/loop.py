"""
Discrete-time Gaussian simulation of the memory feedback loop.

One round trip, on the pair (atomic spin wave S_a, optical signal S_L):

1. a fresh optical input (vacuum, or a coherent seed) joins the retained atomic mode;
2. forward Raman pass: two-mode squeezer with r_f;
3. optical arm: phase phi, then transmissivity T_s; optional amplifier G_AM and
   attenuator l;
4. atomic arm: ac-Stark phase delta plus the injected atomic phase theta_A;
5. backward Raman pass: two-mode squeezer with r_b;
6. the optical mode is the interference output S_f and is measured;
7. the atomic mode decays to vacuum with probability gamma_a;
8. the optical mode is discarded.

Only the atomic mode carries over, so it is the memory of the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from phasecomb.curve import LOOP_ENGINE, FringeCurve
from phasecomb.gaussian import (
    GaussianChannel,
    GaussianState,
    amplifier_channel,
    coherent,
    compose,
    loss_channel,
    phase_shift,
    photon_moments,
    two_mode_squeezer,
)

ATOM, LIGHT = 0, 1
MODE_LABELS = ("S_a", "S_L")
# memory moments beyond this mean the loop is running away above threshold
DIVERGENCE_CEILING = 1e120


class NonConvergenceError(RuntimeError):
    """The loop did not reach steady state within ``J_max`` round trips."""

    def __init__(self, message: str, residual: float = math.nan, phis: Sequence[float] = ()):
        super().__init__(message)
        self.residual = residual
        self.phis = tuple(float(p) for p in phis)


@dataclass(frozen=True)
class RamanDrive:
    """Pump settings of one Raman pass.

    The Raman strength is eta = c_eta * A_W / Delta and the ac-Stark rate is
    zeta = c_zeta * A_W**2 / Delta; over the interaction time t the pass squeezes
    with r = eta * t (gain cosh r) and shifts the atomic phase by zeta * t.
    """

    pump_amplitude: float
    detuning: float
    c_eta: float = 1.0
    c_zeta: float = 0.0
    interaction_time: float = 1.0
    pump_phase: float = 0.0

    def __post_init__(self):
        for name in ("pump_amplitude", "detuning", "c_eta", "c_zeta", "interaction_time", "pump_phase"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.pump_amplitude <= 0:
            raise ValueError(f"pump_amplitude must be positive, got {self.pump_amplitude}")
        if self.detuning == 0:
            raise ValueError("detuning must be non-zero")
        if self.interaction_time <= 0:
            raise ValueError(f"interaction_time must be positive, got {self.interaction_time}")
        if self.squeeze < 0:
            raise ValueError(
                f"eta * t = {self.squeeze} is negative; c_eta must share the sign of the detuning"
            )

    @classmethod
    def from_squeeze(cls, r: float, stark_phase: float = 0.0, pump_phase: float = 0.0) -> RamanDrive:
        """Drive with unit amplitude, detuning and time that squeezes by ``r``."""
        return cls(1.0, 1.0, c_eta=r, c_zeta=stark_phase, pump_phase=pump_phase)

    @property
    def eta(self) -> float:
        return self.c_eta * self.pump_amplitude / self.detuning

    @property
    def zeta(self) -> float:
        return self.c_zeta * self.pump_amplitude**2 / self.detuning

    @property
    def squeeze(self) -> float:
        return self.eta * self.interaction_time

    @property
    def gain(self) -> float:
        return math.cosh(self.squeeze)

    @property
    def stark_phase(self) -> float:
        return self.zeta * self.interaction_time


@dataclass(frozen=True)
class Insertion:
    """Amplifier (amplitude gain) followed by an attenuator on the optical arm."""

    gain: float
    loss: float

    def __post_init__(self):
        if not self.gain >= 1.0:
            raise ValueError(f"amplifier gain must be >= 1, got {self.gain}")
        if not 0.0 <= self.loss < 1.0:
            raise ValueError(f"attenuator loss must lie in [0, 1), got {self.loss}")

    @classmethod
    def intensity_preserving(cls, power_gain: float) -> Insertion:
        """G_AM^2 = ``power_gain`` with l = 1 - 1/G_AM^2, so G_AM sqrt(1 - l) = 1."""
        if power_gain < 1.0:
            raise ValueError(f"power gain must be >= 1, got {power_gain}")
        return cls(math.sqrt(power_gain), 1.0 - 1.0 / power_gain)

    @property
    def amplitude_factor(self) -> float:
        return self.gain * math.sqrt(1.0 - self.loss)


@dataclass(frozen=True)
class LoopConfig:
    forward_drive: RamanDrive
    backward_drive: RamanDrive
    phi: float = 0.0
    T_s: float = 1.0
    gamma_a: float = 0.1
    theta_A: float = 0.0
    insertion: Insertion | None = None
    seed: complex = 0j
    J_max: int = 10_000
    steady_tol: float = 1e-10

    def __post_init__(self):
        for name in ("phi", "T_s", "gamma_a", "theta_A", "steady_tol"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 < self.T_s <= 1.0:
            raise ValueError(f"T_s must lie in (0, 1], got {self.T_s}")
        if not 0.0 <= self.gamma_a <= 1.0:
            raise ValueError(f"gamma_a must lie in [0, 1], got {self.gamma_a}")
        if int(self.J_max) != self.J_max or self.J_max < 1:
            raise ValueError(f"J_max must be a positive integer, got {self.J_max}")
        if self.steady_tol <= 0:
            raise ValueError("steady_tol must be positive")
        seed = complex(self.seed)
        if not (math.isfinite(seed.real) and math.isfinite(seed.imag)):
            raise ValueError("seed must be finite")
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "J_max", int(self.J_max))

    @classmethod
    def symmetric(cls, r: float, stark_phase: float = 0.0, **kwargs) -> LoopConfig:
        """Equal forward and backward squeezing ``r``; ac-Stark phase on the forward pass."""
        return cls(
            RamanDrive.from_squeeze(r, stark_phase),
            RamanDrive.from_squeeze(r),
            **kwargs,
        )

    def with_(self, **changes) -> LoopConfig:
        return replace(self, **changes)

    @property
    def atomic_phase_per_loop(self) -> float:
        """Phase written on S_a each round trip: forward ac-Stark shift plus theta_A."""
        return self.forward_drive.stark_phase + self.theta_A

    @property
    def arm_transmission(self) -> float:
        """Amplitude transmission of the optical arm including any insertion."""
        t = math.sqrt(self.T_s)
        if self.insertion is not None:
            t *= self.insertion.amplitude_factor
        return t

    def round_trip_gain(self) -> float:
        """Worst-case (over phi) amplitude growth of the atomic memory per round trip.

        The loop is below threshold, and a steady state exists for every phi,
        iff this is < 1.  For a lossless arm it equals sqrt(1-gamma_a) cosh(r_f + r_b).
        """
        rf, rb = self.forward_drive.squeeze, self.backward_drive.squeeze
        best = math.cosh(rf) * math.cosh(rb) + math.sinh(rf) * math.sinh(rb) * self.arm_transmission
        return math.sqrt(1.0 - self.gamma_a) * best

    def below_threshold(self) -> bool:
        return self.round_trip_gain() < 1.0


@dataclass(frozen=True)
class AtomicPhaseProbe:
    I_p: float
    Delta_p: float
    tau: float = 1.0
    c_probe: float = 1.0


def atomic_phase(probe: AtomicPhaseProbe) -> float:
    """Probe-induced atomic phase c * I_p * tau / Delta'."""
    if probe.Delta_p == 0:
        raise ValueError("probe detuning must be non-zero")
    if probe.I_p < 0:
        raise ValueError("probe power must be non-negative")
    theta = probe.c_probe * probe.I_p * probe.tau / probe.Delta_p
    if not math.isfinite(theta):
        raise ValueError("atomic phase is not finite")
    return theta


@dataclass(frozen=True)
class LoopRecord:
    """One round trip.

    ``atomic_amplitude`` and ``memory_photons`` describe the retained atomic
    mode after decay; ``signal`` and ``noise`` are the S_f photon mean and
    variance; the arm photon numbers are taken right after the forward pass.
    """

    n: int
    atomic_amplitude: complex
    signal: float
    noise: float
    residual: float
    optical_arm_photons: float
    atomic_arm_photons: float
    memory_photons: float

    @property
    def atomic_xp(self) -> tuple[float, float]:
        return self.atomic_amplitude.real, self.atomic_amplitude.imag

    @property
    def phase_sensing_particles(self) -> float:
        return self.optical_arm_photons + self.atomic_arm_photons


@dataclass(frozen=True)
class LoopTrace:
    records: tuple[LoopRecord, ...]
    atomic_state: GaussianState
    converged: bool
    config: LoopConfig = field(repr=False)

    @property
    def loops_used(self) -> int:
        return len(self.records)

    @property
    def residual(self) -> float:
        return self.records[-1].residual

    @property
    def last(self) -> LoopRecord:
        return self.records[-1]


def _sensing_channel(config: LoopConfig, phi: float) -> GaussianChannel:
    """Forward Raman pass followed by the phase phi on the optical arm."""
    fwd = config.forward_drive
    forward = two_mode_squeezer(fwd.squeeze, fwd.pump_phase, (ATOM, LIGHT), 2)
    return compose(phase_shift(phi, LIGHT, 2), forward)


def _recombine_channel(config: LoopConfig) -> GaussianChannel:
    """Everything between the phase-sensing stage and the output port."""
    bwd = config.backward_drive
    steps = [loss_channel(config.T_s, LIGHT, 2)]
    if config.insertion is not None:
        steps.append(amplifier_channel(config.insertion.gain, LIGHT, 2))
        steps.append(loss_channel(1.0 - config.insertion.loss, LIGHT, 2))
    steps.append(phase_shift(config.atomic_phase_per_loop, ATOM, 2))
    steps.append(two_mode_squeezer(bwd.squeeze, bwd.pump_phase, (ATOM, LIGHT), 2))
    return compose(*reversed(steps))


@dataclass
class _Batch:
    """Moments of the retained atomic mode for a stack of phases."""

    mean: NDArray[np.float64]  # (P, 2)
    cov: NDArray[np.float64]  # (P, 2, 2)


@dataclass
class _Step:
    atom: _Batch
    signal: NDArray[np.float64]
    noise: NDArray[np.float64]
    optical_photons: NDArray[np.float64]
    atomic_photons: NDArray[np.float64]
    memory_photons: NDArray[np.float64]
    residual: NDArray[np.float64]


def _transpose(m: NDArray) -> NDArray:
    return np.swapaxes(m, -1, -2)


def _residual(old: _Batch, new: _Batch) -> NDArray[np.float64]:
    """Relative change of the atomic mean and covariance, per phase."""
    scale = np.maximum(np.linalg.norm(old.mean, axis=1), np.linalg.norm(new.mean, axis=1))
    diff = np.linalg.norm(new.mean - old.mean, axis=1)
    mean_change = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    cov_change = np.linalg.norm(new.cov - old.cov, axis=(1, 2)) / np.linalg.norm(new.cov, axis=(1, 2))
    return np.maximum(mean_change, cov_change)


class _LoopPropagator:
    """One round trip applied to many phases at once."""

    def __init__(self, config: LoopConfig, phis: NDArray[np.float64]):
        self.sensing = np.stack([_sensing_channel(config, float(phi)).A for phi in phis])
        self.recombine = _recombine_channel(config)
        self.decay = loss_channel(1.0 - config.gamma_a)
        self.light = coherent(config.seed, MODE_LABELS[LIGHT])

    def step(self, atom: _Batch, active: NDArray[np.intp]) -> _Step:
        # above threshold the moments grow until they overflow; callers check finiteness
        with np.errstate(over="ignore", invalid="ignore"):
            return self._step(atom, active)

    def _step(self, atom: _Batch, active: NDArray[np.intp]) -> _Step:
        size = active.size
        A = self.sensing[active]
        mean = np.concatenate([atom.mean, np.broadcast_to(self.light.mean, (size, 2))], axis=1)
        cov = np.zeros((size, 4, 4))
        cov[:, :2, :2] = atom.cov
        cov[:, 2:, 2:] = self.light.cov
        arm_mean = np.einsum("pij,pj->pi", A, mean)
        arm_cov = A @ cov @ _transpose(A)

        R = self.recombine
        out_mean = arm_mean @ R.A.T + R.d
        out_cov = R.A @ arm_cov @ R.A.T + R.N
        out_cov = 0.5 * (out_cov + _transpose(out_cov))

        signal, noise = photon_moments(out_cov[:, 2:, 2:], out_mean[:, 2:])
        optical, _ = photon_moments(arm_cov[:, 2:, 2:], arm_mean[:, 2:])
        atomic, _ = photon_moments(arm_cov[:, :2, :2], arm_mean[:, :2])

        D = self.decay
        new_cov = D.A @ out_cov[:, :2, :2] @ D.A.T + D.N
        new = _Batch(out_mean[:, :2] @ D.A.T + D.d, 0.5 * (new_cov + _transpose(new_cov)))
        memory, _ = photon_moments(new.cov, new.mean)
        residual = _residual(atom, new)
        residual[~(memory < DIVERGENCE_CEILING)] = np.inf
        return _Step(new, signal, noise, optical, atomic, memory, residual)


def _empty_memory(size: int) -> _Batch:
    return _Batch(np.zeros((size, 2)), np.broadcast_to(np.eye(2), (size, 2, 2)).copy())


def run_loop(config: LoopConfig, loops: int | None = None) -> LoopTrace:
    """Iterate round trips from an empty (vacuum) atomic memory.

    With ``loops`` the loop runs exactly that many round trips; otherwise it
    stops at the first round trip whose residual drops below ``steady_tol``,
    or after ``J_max`` round trips with ``converged=False``.
    """
    if loops is not None and loops < 1:
        raise ValueError(f"loops must be positive, got {loops}")
    prop = _LoopPropagator(config, np.array([config.phi]))
    only = np.zeros(1, dtype=np.intp)
    atom = _empty_memory(1)

    records = []
    converged = False
    limit = config.J_max if loops is None else loops
    for n in range(1, limit + 1):
        step = prop.step(atom, only)
        if not np.isfinite(step.residual[0]):
            # running away above threshold; keep the last sane round trip
            break
        atom = step.atom
        x, p = atom.mean[0]
        records.append(
            LoopRecord(
                n=n,
                atomic_amplitude=complex(x, p) / 2,
                signal=float(step.signal[0]),
                noise=float(step.noise[0]),
                residual=float(step.residual[0]),
                optical_arm_photons=float(step.optical_photons[0]),
                atomic_arm_photons=float(step.atomic_photons[0]),
                memory_photons=float(step.memory_photons[0]),
            )
        )
        converged = bool(step.residual[0] < config.steady_tol)
        if converged and loops is None:
            break
    state = GaussianState(MODE_LABELS[:1], atom.mean[0], atom.cov[0])
    return LoopTrace(tuple(records), state, converged, config)


def steady_state(config: LoopConfig) -> tuple[GaussianState, int]:
    """Retained atomic state at steady state and the number of round trips used."""
    trace = run_loop(config)
    if not trace.converged:
        raise NonConvergenceError(
            f"no steady state after {trace.loops_used} round trips at phi={config.phi:.6g} "
            f"(residual {trace.residual:.3e}, round-trip gain {config.round_trip_gain():.6f})",
            residual=trace.residual,
            phis=[config.phi],
        )
    return trace.atomic_state, trace.loops_used


def fringe_scan(config: LoopConfig, phi_grid: Sequence[float], loops: int | None = None) -> FringeCurve:
    """Steady-state S_f photon mean and variance at every phase in the grid.

    With ``loops`` each point is instead taken after exactly that many round
    trips from an empty memory.  All phases are propagated together; each one
    is frozen at the first round trip where it meets ``steady_tol``, so the
    values match ``run_loop`` point by point.
    """
    phis = np.asarray(phi_grid, dtype=float).reshape(-1)
    if phis.size == 0:
        raise ValueError("empty phase grid")
    if loops is not None and loops < 1:
        raise ValueError(f"loops must be positive, got {loops}")
    prop = _LoopPropagator(config, phis)
    signal = np.empty_like(phis)
    noise = np.empty_like(phis)
    particles = np.empty_like(phis)
    residual = np.full_like(phis, np.inf)

    active = np.arange(phis.size)
    atom = _empty_memory(phis.size)
    limit = config.J_max if loops is None else loops
    for n in range(1, limit + 1):
        step = prop.step(atom, active)
        done = np.full(active.size, n == limit) | ~np.isfinite(step.residual)
        if loops is None:
            done |= step.residual < config.steady_tol
        idx = active[done]
        signal[idx] = step.signal[done]
        noise[idx] = step.noise[done]
        particles[idx] = step.optical_photons[done] + step.atomic_photons[done]
        residual[idx] = step.residual[done]
        keep = ~done
        active = active[keep]
        atom = _Batch(step.atom.mean[keep], step.atom.cov[keep])
        if active.size == 0:
            break

    failed = ~np.isfinite(residual)
    if loops is None:
        failed |= residual >= config.steady_tol
    if np.any(failed):
        raise NonConvergenceError(
            f"no steady state at {int(failed.sum())} of {phis.size} phases "
            f"(round-trip gain {config.round_trip_gain():.6f})",
            residual=float(residual[failed].max()),
            phis=phis[failed],
        )
    return FringeCurve(phis, signal, noise, LOOP_ENGINE, particles)


__all__ = [
    "AtomicPhaseProbe",
    "Insertion",
    "LoopConfig",
    "LoopRecord",
    "LoopTrace",
    "NonConvergenceError",
    "RamanDrive",
    "atomic_phase",
    "fringe_scan",
    "run_loop",
    "steady_state",
]
