"""
Closed-form phase comb of the loop's mean field.

The mean amplitudes of the loop obey a linear recursion in which every round
trip multiplies the optical arm by z = exp(i phi).  Carrying that factor
symbolically, each arm becomes a polynomial in z,

    arm(phi) = sum_n  G_n exp(i (n phi + delta_n)),

whose coefficients are the comb teeth.  The atomic teeth describe the
phase-conjugate atomic amplitude conj(<S_a>), which shares its phase reference
with the optical seed.  The output port S_f mixes both arms, and its intensity
collects into harmonics

    I(phi) = offset + sum_h F_h cos(h phi + Lambda_h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from phasecomb.curve import CLOSED_FORM, FringeCurve
from phasecomb.loop import LoopConfig, NonConvergenceError

MIN_POINTS_PER_PERIOD = 256


class ThresholdError(ValueError):
    """The configuration is at or above the loop's oscillation threshold."""


@dataclass(frozen=True)
class Tooth:
    n: int
    amplitude: float
    offset: float


@dataclass(frozen=True)
class PhaseComb:
    """Tooth coefficients of both arms at the backward (recombining) Raman pass.

    ``atomic[n]`` and ``optical[n]`` are the complex weights of exp(i n phi);
    the output field is ``mix[0] * optical + mix[1] * atomic``.
    """

    atomic: NDArray[np.complex128]
    optical: NDArray[np.complex128]
    mix: tuple[complex, complex]
    loops: int

    def __post_init__(self):
        size = max(len(self.atomic), len(self.optical))
        for name in ("atomic", "optical"):
            arr = np.zeros(size, dtype=complex)
            coeffs = np.asarray(getattr(self, name), dtype=complex)
            arr[: coeffs.size] = coeffs
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def J(self) -> int:
        return self.loops

    @staticmethod
    def _teeth(coeffs) -> list[Tooth]:
        return [
            Tooth(n, float(abs(c)), float(np.angle(c)))
            for n, c in enumerate(coeffs)
            if c != 0
        ]

    @property
    def atomic_teeth(self) -> list[Tooth]:
        return self._teeth(self.atomic)

    @property
    def optical_teeth(self) -> list[Tooth]:
        return self._teeth(self.optical)

    @property
    def output(self) -> NDArray[np.complex128]:
        return self.mix[0] * self.optical + self.mix[1] * self.atomic

    def is_empty(self) -> bool:
        return not np.any(self.atomic) and not np.any(self.optical)

    def perturbed(self, tooth: int, factor: float, arm: str = "atomic") -> PhaseComb:
        """Copy with one tooth amplitude scaled by ``factor``."""
        coeffs = np.array(getattr(self, arm))
        coeffs[tooth] *= factor
        other = "optical" if arm == "atomic" else "atomic"
        kwargs = {arm: coeffs, other: getattr(self, other)}
        return PhaseComb(mix=self.mix, loops=self.loops, **kwargs)

    @classmethod
    def from_output_teeth(cls, teeth: Sequence[tuple[int, float, float]]) -> PhaseComb:
        """Comb whose output field has the given (n, G_n, delta_n) teeth."""
        size = max(n for n, _, _ in teeth) + 1
        coeffs = np.zeros(size, dtype=complex)
        for n, amp, off in teeth:
            if amp < 0:
                raise ValueError("tooth amplitudes must be non-negative")
            coeffs[n] += amp * np.exp(1j * off)
        return cls(np.zeros(size), coeffs, (1.0, 0.0), size - 1)


def _round_trip(config: LoopConfig):
    """Scalar mean-field coefficients of one round trip."""
    fwd, bwd = config.forward_drive, config.backward_drive
    return dict(
        cf=math.cosh(fwd.squeeze),
        sf=math.sinh(fwd.squeeze) * np.exp(-1j * fwd.pump_phase),
        cb=math.cosh(bwd.squeeze),
        sb=math.sinh(bwd.squeeze) * np.exp(-1j * bwd.pump_phase),
        atom_phase=np.exp(-1j * config.atomic_phase_per_loop),
        t=config.arm_transmission,
        survive=math.sqrt(1.0 - config.gamma_a),
        seed=config.seed,
    )


def _shift(poly: NDArray) -> NDArray:
    """Multiply by z."""
    return np.concatenate([[0j], poly])


def _add(p: NDArray, q: NDArray) -> NDArray:
    out = np.zeros(max(p.size, q.size), dtype=complex)
    out[: p.size] += p
    out[: q.size] += q
    return out


def _arms(memory: NDArray, k: dict) -> tuple[NDArray, NDArray]:
    """Atomic (conjugate) and optical arm polynomials entering the backward pass.

    ``memory`` is conj(<S_a>) held in the vapour before the round trip.
    ``sf`` and ``sb`` carry conj(exp(i pump_phase)).
    """
    beta = np.array([k["seed"]])
    atomic = k["atom_phase"] * _add(k["cf"] * memory, k["sf"] * beta)
    optical = k["t"] * _shift(_add(k["cf"] * beta, np.conj(k["sf"]) * memory))
    return atomic, optical


def _recombine(atomic: NDArray, optical: NDArray, k: dict) -> NDArray:
    """conj(<S_a>) after the backward pass and decay."""
    return k["survive"] * _add(k["cb"] * atomic, k["sb"] * optical)


def _mix(k: dict) -> tuple[complex, complex]:
    # S_f = cb * optical + sinh(r_b) e^{i pump} * conj(atomic arm)
    return complex(k["cb"]), complex(np.conj(k["sb"]))


def transient_comb(config: LoopConfig, loops: int) -> PhaseComb:
    """Comb of the round trip number ``loops`` starting from an empty memory."""
    if loops < 1:
        raise ValueError(f"loops must be positive, got {loops}")
    k = _round_trip(config)
    memory = np.zeros(1, dtype=complex)
    for _ in range(loops - 1):
        memory = _recombine(*_arms(memory, k), k)
    atomic, optical = _arms(memory, k)
    return PhaseComb(atomic, optical, _mix(k), loops)


def steady_comb(config: LoopConfig, loops: int | None = None) -> PhaseComb:
    """Steady-state comb, unrolled until the memory teeth stop changing.

    With ``loops`` given, the comb is truncated at that many round trips,
    which is exactly the loop after ``loops`` round trips.
    """
    if not config.below_threshold():
        raise ThresholdError(
            f"round-trip gain {config.round_trip_gain():.6f} >= 1: the loop has no steady state"
        )
    if loops is not None:
        return transient_comb(config, loops)
    k = _round_trip(config)
    memory = np.zeros(1, dtype=complex)
    for n in range(1, config.J_max + 1):
        new = _recombine(*_arms(memory, k), k)
        scale = np.linalg.norm(new)
        change = np.linalg.norm(_add(new, -memory))
        memory = new
        if scale == 0 or change <= config.steady_tol * scale:
            atomic, optical = _arms(memory, k)
            return PhaseComb(atomic, optical, _mix(k), n + 1)
    raise NonConvergenceError(
        f"comb teeth still changing after {config.J_max} round trips", phis=[]
    )


def tooth_ratio(config: LoopConfig) -> complex:
    """Asymptotic ratio G_{n+1} e^{i delta_{n+1}} / (G_n e^{i delta_n}) of the steady memory comb.

    Per round trip the memory either stays in the vapour (weight
    sqrt(1-gamma_a) cosh r_b cosh r_f, no optical phase) or crosses the optical
    arm once (weight sqrt(1-gamma_a) sinh r_b sinh r_f t, one factor z).  Summing
    the stay-only paths between crossings gives the geometric ratio.
    """
    k = _round_trip(config)
    stay = k["survive"] * k["cb"] * k["cf"] * k["atom_phase"]
    cross = k["survive"] * k["sb"] * k["t"] * np.conj(k["sf"])
    return complex(cross / (1.0 - stay))


def harmonics(comb: PhaseComb) -> tuple[float, NDArray[np.float64], NDArray[np.float64]]:
    """(offset, F_h, Lambda_h) for h = 1..len-1 of |output(phi)|^2."""
    e = comb.output
    offset = float(np.sum(np.abs(e) ** 2))
    # C_h = sum_m e_m conj(e_{m-h})
    corr = np.correlate(e, e, mode="full")[e.size :]
    return offset, 2 * np.abs(corr), np.angle(corr)


def synthesize_fringe(comb: PhaseComb, theta_A: float = 0.0, phi_grid: Sequence[float] = ()) -> FringeCurve:
    """signal(phi) = offset + sum_h F_h cos(h phi + Lambda_h + theta_A)."""
    phis = np.asarray(phi_grid, dtype=float).reshape(-1)
    offset, F, lam = harmonics(comb)
    h = np.arange(1, F.size + 1)
    signal = offset + np.cos(np.outer(phis, h) + lam + theta_A) @ F
    if theta_A == 0.0:
        signal = np.maximum(signal, 0.0)
    return FringeCurve(phis, signal, None, CLOSED_FORM)


def compare_fringes(a: FringeCurve, b: FringeCurve) -> float:
    """max |signal_a - signal_b| / max(signal_b) on a shared grid."""
    if a.phi.shape != b.phi.shape or not np.allclose(a.phi, b.phi, rtol=0, atol=1e-12):
        raise ValueError("fringes are sampled on different phase grids")
    scale = np.max(np.abs(b.signal))
    diff = np.max(np.abs(a.signal - b.signal))
    if scale == 0:
        return 0.0 if diff == 0 else math.inf
    return float(diff / scale)


def _refine_peak(y: NDArray, i: int) -> tuple[float, float]:
    """Parabolic vertex through (i-1, i, i+1) on a periodic sample."""
    ym, y0, yp = y[i - 1], y[i], y[(i + 1) % y.size]
    curv = ym - 2 * y0 + yp
    if curv >= 0:
        return float(y0), 0.0
    shift = 0.5 * (ym - yp) / curv
    return float(y0 - 0.25 * (ym - yp) * shift), float(shift)


def fringe_slope(curve: FringeCurve) -> NDArray[np.float64]:
    """Central-difference slope; periodic when the grid spans a full period."""
    phi, s = curve.phi, curve.signal
    if phi.size < 3:
        raise ValueError("need at least 3 phases for a slope")
    steps = np.diff(phi)
    h = steps[0]
    if not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise ValueError("slope needs a uniform phase grid")
    if math.isclose(h * phi.size, 2 * np.pi, rel_tol=1e-9):
        return (np.roll(s, -1) - np.roll(s, 1)) / (2 * h)
    return np.gradient(s, h)


def sawtooth_metrics(curve: FringeCurve) -> tuple[float, float, float]:
    """(max |slope|, slope asymmetry >= 1, phase of the steepest point).

    The asymmetry is the steepest descent over the steepest ascent, or its
    reciprocal, whichever is >= 1; a symmetric fringe gives 1.
    """
    phi = curve.phi
    if phi.size < 3:
        raise ValueError("phase grid too coarse")
    h = phi[1] - phi[0]
    if 2 * np.pi / h < MIN_POINTS_PER_PERIOD - 1e-9:
        raise ValueError(
            f"phase grid too coarse: {2 * np.pi / h:.1f} points per period, "
            f"need >= {MIN_POINTS_PER_PERIOD}"
        )
    slope = fringe_slope(curve)
    rise, _ = _refine_peak(slope, int(np.argmax(slope)))
    fall, _ = _refine_peak(-slope, int(np.argmin(slope)))
    if rise <= 0 and fall <= 0:
        return 0.0, 1.0, float(phi[0])
    if rise <= 0 or fall <= 0:
        asym = math.inf
    else:
        asym = max(rise / fall, fall / rise)
    i = int(np.argmax(np.abs(slope)))
    steepest, shift = _refine_peak(np.abs(slope), i)
    return steepest, float(asym), float(phi[i] + shift * h)
