from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

LOOP_ENGINE = "loop-engine"
CLOSED_FORM = "closed-form"
BENCHMARK = "coherent-benchmark"


@dataclass(frozen=True)
class FringeCurve:
    """Output-port photon mean (signal) and variance (noise) sampled on a phase grid.

    ``particles`` is the number of phase-sensing quanta per shot at each phase,
    when the producer knows it; ``noise`` is None for mean-field curves.
    Closed-form signals carrying an extra harmonic phase are interference
    terms rather than intensities and may dip below zero.
    """

    phi: NDArray[np.float64]
    signal: NDArray[np.float64]
    noise: NDArray[np.float64] | None = None
    source: str = LOOP_ENGINE
    particles: NDArray[np.float64] | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        if phi.size == 0:
            raise ValueError("empty phase grid")
        object.__setattr__(self, "phi", phi)
        for name in ("signal", "noise", "particles"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=float).reshape(-1)
            if arr.shape != phi.shape:
                raise ValueError(f"{name} has {arr.size} samples for {phi.size} phases")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            if np.any(arr < 0) and not (name == "signal" and self.source == CLOSED_FORM):
                raise ValueError(f"{name} must be non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        phi.setflags(write=False)

    def __len__(self) -> int:
        return self.phi.size


def phase_grid(points: int = 1024, start: float = 0.0, stop: float = 2 * np.pi) -> NDArray[np.float64]:
    """``points`` phases on [start, stop), endpoint excluded."""
    if points < 2:
        raise ValueError(f"a phase grid needs at least 2 points, got {points}")
    return np.linspace(start, stop, points, endpoint=False)
