"""Shared construction helpers for the test suite."""

import numpy as np

TLS_EPSILON = 5.0 / 13.0
TLS_DELTA = 12.0 / 13.0


def random_hermitian(rng, d, scale=1.0):
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    H = 0.5 * (A + A.conj().T)
    return scale * H / max(np.max(np.abs(np.linalg.eigvalsh(H))), 1e-12)


def random_density(rng, d):
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


def stepped_exact_populations(H, rho0, grid, observable):
    """Tr{observable rho(t_j)} sampled by repeated one-step unitary evolution."""
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * grid.dt)) @ V.conj().T
    out = np.empty(grid.n_points)
    rho = np.array(rho0, dtype=complex)
    out[0] = np.trace(observable @ rho).real
    for j in range(1, grid.n_points):
        rho = U @ rho @ U.conj().T
        out[j] = np.trace(observable @ rho).real
    return out
