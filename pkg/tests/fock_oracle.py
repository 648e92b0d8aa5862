"""Brute-force truncated Fock-space reference for single-mode photon statistics.

Kept free of any import from ``phasecomb`` so it can serve as an independent check.
Operators are built in an enlarged space and the state is cut to ``dim`` levels
afterwards, which keeps matrix-exponential edge effects away from the kept block.
"""

import numpy as np
from scipy.linalg import expm


def annihilation(dim):
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def displaced_squeezed_ket(alpha, r, theta, dim=40, pad=60):
    """|psi> = D(alpha) S(r e^{i theta}) |0>, truncated to ``dim`` levels."""
    big = dim + pad
    a = annihilation(big)
    ad = a.conj().T
    xi = r * np.exp(1j * theta)
    squeeze = expm(0.5 * (np.conj(xi) * a @ a - xi * ad @ ad))
    displace = expm(alpha * ad - np.conj(alpha) * a)
    vac = np.zeros(big, dtype=complex)
    vac[0] = 1.0
    psi = (displace @ squeeze @ vac)[:dim]
    return psi / np.linalg.norm(psi)


def photon_moments(psi):
    n = np.arange(len(psi), dtype=float)
    p = np.abs(psi) ** 2
    mean = float(p @ n)
    return mean, float(p @ n**2) - mean**2


def quadrature_moments(psi):
    """Mean and covariance of (x, p) with x = a + a^dag, p = -i(a - a^dag)."""
    a = annihilation(len(psi))
    ad = a.conj().T
    ops = [a + ad, -1j * (a - ad)]

    def ev(op):
        return np.vdot(psi, op @ psi)

    mean = np.array([ev(o).real for o in ops])
    cov = np.empty((2, 2))
    for i, oi in enumerate(ops):
        for j, oj in enumerate(ops):
            cov[i, j] = (0.5 * ev(oi @ oj + oj @ oi)).real - mean[i] * mean[j]
    return mean, cov
