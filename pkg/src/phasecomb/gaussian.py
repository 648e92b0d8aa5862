"""
Gaussian states and channels in shot-noise units.

Quadratures are ordered (x1, p1, x2, p2, ...) with x = a + a^dag and
p = -i(a - a^dag), so the vacuum covariance is the identity and a coherent
state with amplitude alpha has mean (2 Re alpha, 2 Im alpha).

Every channel is stored as a triple (A, N, d) acting as

    mean -> A @ mean + d
    cov  -> A @ cov @ A.T + N

which covers unitaries (N = 0), loss and phase-insensitive amplification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-10


class DimensionError(ValueError):
    """Raised when a channel and a state act on different numbers of modes."""


def symplectic_form(n_modes: int) -> NDArray[np.float64]:
    """Block-diagonal symplectic form for ``n_modes`` modes."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _frozen(arr: NDArray) -> NDArray[np.float64]:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def _block(mode: int) -> slice:
    return slice(2 * mode, 2 * mode + 2)


@dataclass(frozen=True)
class GaussianState:
    """First and second moments of a multimode Gaussian state."""

    mode_labels: tuple[str, ...]
    mean: NDArray[np.float64]
    cov: NDArray[np.float64]

    def __post_init__(self):
        labels = tuple(str(label) for label in self.mode_labels)
        dim = 2 * len(labels)
        mean = _frozen(self.mean).reshape(-1)
        cov = _frozen(self.cov)
        if not labels:
            raise ValueError("a Gaussian state needs at least one mode")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels: {labels}")
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise DimensionError(
                f"{len(labels)} modes need mean ({dim},) and cov ({dim}, {dim}); "
                f"got {mean.shape} and {cov.shape}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("state moments must be finite")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance matrix is not symmetric")
        object.__setattr__(self, "mode_labels", labels)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return len(self.mode_labels)

    def index(self, mode: int | str) -> int:
        if isinstance(mode, str):
            try:
                return self.mode_labels.index(mode)
            except ValueError:
                raise KeyError(f"no mode labelled {mode!r} in {self.mode_labels}") from None
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes} modes")
        return int(mode)

    def amplitude(self, mode: int | str) -> complex:
        """Mean field <a> of one mode."""
        x, p = self.mean[_block(self.index(mode))]
        return complex(x, p) / 2

    def min_uncertainty_eigenvalue(self) -> float:
        """Smallest eigenvalue of cov + i Omega; negative means unphysical."""
        herm = self.cov + 1j * symplectic_form(self.n_modes)
        return float(np.linalg.eigvalsh(herm)[0])

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        return self.min_uncertainty_eigenvalue() >= -tol

    def reduced(self, modes: Sequence[int | str]) -> GaussianState:
        """Marginal state on ``modes`` (partial trace over the rest)."""
        idx = [self.index(m) for m in modes]
        quad = np.concatenate([np.arange(2 * i, 2 * i + 2) for i in idx])
        return GaussianState(
            tuple(self.mode_labels[i] for i in idx),
            self.mean[quad],
            self.cov[np.ix_(quad, quad)],
        )

    def join(self, other: GaussianState) -> GaussianState:
        """Product state self (x) other."""
        dim = 2 * self.n_modes
        odim = 2 * other.n_modes
        cov = np.zeros((dim + odim, dim + odim))
        cov[:dim, :dim] = self.cov
        cov[dim:, dim:] = other.cov
        return GaussianState(
            self.mode_labels + other.mode_labels,
            np.concatenate([self.mean, other.mean]),
            cov,
        )


@dataclass(frozen=True)
class GaussianChannel:
    """Linear bosonic channel (A, N, d) on ``n_modes`` modes."""

    A: NDArray[np.float64]
    N: NDArray[np.float64]
    d: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        A = _frozen(self.A)
        N = _frozen(self.N)
        dim = A.shape[0]
        d = np.zeros(dim) if self.d is None else self.d
        d = _frozen(d).reshape(-1)
        if A.shape != (dim, dim) or dim % 2 or N.shape != A.shape or d.shape != (dim,):
            raise DimensionError(f"inconsistent channel shapes {A.shape}, {N.shape}, {d.shape}")
        if np.max(np.abs(N - N.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(N))):
            raise ValueError("added-noise matrix is not symmetric")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "d", d)

    @property
    def n_modes(self) -> int:
        return self.A.shape[0] // 2

    def is_unitary(self, tol: float = SYMMETRY_TOL) -> bool:
        omega = symplectic_form(self.n_modes)
        return (
            np.linalg.norm(self.A @ omega @ self.A.T - omega) <= tol
            and np.max(np.abs(self.N), initial=0.0) <= tol
        )

    def complete_positivity_margin(self) -> float:
        """Smallest eigenvalue of N + i(Omega - A Omega A^T)."""
        omega = symplectic_form(self.n_modes)
        herm = self.N + 1j * (omega - self.A @ omega @ self.A.T)
        return float(np.linalg.eigvalsh(herm)[0])

    def __matmul__(self, other: GaussianChannel) -> GaussianChannel:
        return compose(self, other)


def identity_channel(n_modes: int) -> GaussianChannel:
    dim = 2 * n_modes
    return GaussianChannel(np.eye(dim), np.zeros((dim, dim)))


def _local(n_modes: int | None, modes: Sequence[int]) -> int:
    if any(m < 0 for m in modes):
        raise IndexError(f"negative mode index in {tuple(modes)}")
    needed = max(modes) + 1
    if n_modes is None:
        return needed
    if needed > n_modes:
        raise IndexError(f"mode {max(modes)} out of range for {n_modes} modes")
    return n_modes


def _rotation(phi: float) -> NDArray[np.float64]:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def _single_mode(
    block_A: NDArray, block_N: NDArray, mode: int, n_modes: int | None
) -> GaussianChannel:
    n_modes = _local(n_modes, [mode])
    A = np.eye(2 * n_modes)
    N = np.zeros_like(A)
    A[_block(mode), _block(mode)] = block_A
    N[_block(mode), _block(mode)] = block_N
    return GaussianChannel(A, N)


def vacuum(n_modes: int, labels: Sequence[str] | None = None) -> GaussianState:
    """Vacuum on ``n_modes`` modes: zero mean and identity covariance."""
    if n_modes < 1:
        raise ValueError(f"need at least one mode, got {n_modes}")
    if labels is None:
        labels = [f"m{i}" for i in range(n_modes)]
    if len(labels) != n_modes:
        raise ValueError(f"{len(labels)} labels for {n_modes} modes")
    return GaussianState(tuple(labels), np.zeros(2 * n_modes), np.eye(2 * n_modes))


def coherent(alpha: complex, label: str = "m0") -> GaussianState:
    """Single-mode coherent state with mean field ``alpha``."""
    alpha = complex(alpha)
    return GaussianState((label,), [2 * alpha.real, 2 * alpha.imag], np.eye(2))


def two_mode_squeezer(
    r: float, theta: float = 0.0, modes: tuple[int, int] = (0, 1), n_modes: int | None = None
) -> GaussianChannel:
    """Two-mode squeezing a_j -> cosh(r) a_j + e^{i theta} sinh(r) a_k^dag (and j <-> k).

    The intensity difference and the phase sum of the pair are squeezed:
    on vacuum, Var[(x_j - x_k)/sqrt 2] = Var[(p_j + p_k)/sqrt 2] = exp(-2r) for theta = 0.
    """
    if r < 0:
        raise ValueError(f"squeeze parameter must be non-negative, got {r}")
    j, k = modes
    if j == k:
        raise ValueError(f"two-mode squeezer needs distinct modes, got {modes}")
    n_modes = _local(n_modes, modes)
    ch, sh = np.cosh(r), np.sinh(r)
    # e^{i theta} a^dag in quadratures
    cross = sh * np.array([[np.cos(theta), np.sin(theta)], [np.sin(theta), -np.cos(theta)]])
    A = np.eye(2 * n_modes)
    A[_block(j), _block(j)] = ch * np.eye(2)
    A[_block(k), _block(k)] = ch * np.eye(2)
    A[_block(j), _block(k)] = cross
    A[_block(k), _block(j)] = cross
    return GaussianChannel(A, np.zeros_like(A))


def squeezer(r: float, theta: float = 0.0, mode: int = 0, n_modes: int | None = None) -> GaussianChannel:
    """Single-mode squeezer S(r e^{i theta}); theta = 0 squeezes x."""
    rot = _rotation(theta / 2)
    block = rot @ np.diag([np.exp(-r), np.exp(r)]) @ rot.T
    return _single_mode(block, np.zeros((2, 2)), mode, n_modes)


def phase_shift(phi: float, mode: int = 0, n_modes: int | None = None) -> GaussianChannel:
    """a -> e^{i phi} a."""
    return _single_mode(_rotation(phi), np.zeros((2, 2)), mode, n_modes)


def loss_channel(T: float, mode: int = 0, n_modes: int | None = None) -> GaussianChannel:
    """Beam splitter of power transmissivity ``T`` against vacuum."""
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {T}")
    return _single_mode(np.sqrt(T) * np.eye(2), (1.0 - T) * np.eye(2), mode, n_modes)


def amplifier_channel(gain: float, mode: int = 0, n_modes: int | None = None) -> GaussianChannel:
    """Phase-insensitive amplifier a -> G a + sqrt(G^2 - 1) v^dag with amplitude gain G."""
    if gain < 1.0:
        raise ValueError(f"amplitude gain must be >= 1, got {gain}")
    return _single_mode(gain * np.eye(2), (gain**2 - 1.0) * np.eye(2), mode, n_modes)


def beam_splitter(
    T: float, modes: tuple[int, int] = (0, 1), n_modes: int | None = None
) -> GaussianChannel:
    """Lossless beam splitter a_j -> sqrt(T) a_j + sqrt(1-T) a_k, a_k -> sqrt(T) a_k - sqrt(1-T) a_j."""
    if not 0.0 <= T <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {T}")
    j, k = modes
    if j == k:
        raise ValueError(f"beam splitter needs distinct modes, got {modes}")
    n_modes = _local(n_modes, modes)
    t, s = np.sqrt(T), np.sqrt(1.0 - T)
    A = np.eye(2 * n_modes)
    A[_block(j), _block(j)] = t * np.eye(2)
    A[_block(k), _block(k)] = t * np.eye(2)
    A[_block(j), _block(k)] = s * np.eye(2)
    A[_block(k), _block(j)] = -s * np.eye(2)
    return GaussianChannel(A, np.zeros_like(A))


def displacement(alpha: complex, mode: int = 0, n_modes: int | None = None) -> GaussianChannel:
    ch = identity_channel(_local(n_modes, [mode]))
    d = np.zeros(2 * ch.n_modes)
    d[_block(mode)] = [2 * complex(alpha).real, 2 * complex(alpha).imag]
    return GaussianChannel(ch.A, ch.N, d)


def compose(*channels: GaussianChannel) -> GaussianChannel:
    """compose(c2, c1) is c2 after c1 (rightmost acts first)."""
    if not channels:
        raise ValueError("nothing to compose")
    out = channels[-1]
    for ch in reversed(channels[:-1]):
        if ch.n_modes != out.n_modes:
            raise DimensionError(f"cannot compose {ch.n_modes}-mode with {out.n_modes}-mode channel")
        N = ch.A @ out.N @ ch.A.T + ch.N
        out = GaussianChannel(ch.A @ out.A, 0.5 * (N + N.T), ch.A @ out.d + ch.d)
    return out


def apply(channel: GaussianChannel, state: GaussianState) -> GaussianState:
    if channel.n_modes != state.n_modes:
        raise DimensionError(
            f"{channel.n_modes}-mode channel applied to {state.n_modes}-mode state"
        )
    cov = channel.A @ state.cov @ channel.A.T + channel.N
    return GaussianState(
        state.mode_labels,
        channel.A @ state.mean + channel.d,
        0.5 * (cov + cov.T),
    )


def photon_moments(V: NDArray, d: NDArray) -> tuple[NDArray, NDArray]:
    """Photon-number mean and variance from 2x2 covariance blocks and quadrature means.

    Broadcasts over leading axes.  With vacuum V = I:

        <n>    = (tr V + |d|^2) / 4 - 1/2
        Var(n) = (tr V^2 + 2 d.V.d) / 8 - 1/4
    """
    V = np.asarray(V, dtype=float)
    d = np.asarray(d, dtype=float)
    tr = V[..., 0, 0] + V[..., 1, 1]
    tr_sq = np.einsum("...ij,...ji->...", V, V)
    dVd = np.einsum("...i,...ij,...j->...", d, V, d)
    mean_n = (tr + np.einsum("...i,...i->...", d, d)) / 4 - 0.5
    var_n = (tr_sq + 2 * dVd) / 8 - 0.25
    # clip round-off below the vacuum floor
    return np.maximum(mean_n, 0.0), np.maximum(var_n, 0.0)


def photon_stats(state: GaussianState, mode: int | str = 0) -> tuple[float, float]:
    """Exact photon-number mean and variance of one mode."""
    i = state.index(mode)
    mean_n, var_n = photon_moments(state.cov[_block(i), _block(i)], state.mean[_block(i)])
    return float(mean_n), float(var_n)
