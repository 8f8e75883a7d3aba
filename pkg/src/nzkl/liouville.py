"""Dense operator and superoperator linear algebra for vectorized states.

Conventions used throughout the package: hbar = 1, an operator entry is
indexed A[m, n] = <m|A|n> with state labels 0..d-1, and a d x d operator
is flattened row-major so that vec(rho)[m*d + n] = rho[m, n].  A
superoperator is a (d**2, d**2) complex matrix acting on such flat
vectors; the commutator generator built from a Hamiltonian H acts as
devectorize(L @ vectorize(rho)) = H @ rho - rho @ H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
EIGENVALUE_FLOOR = -1e-10
RESIDUAL_TOL = 1e-10
CONDITION_LIMIT = 1e12


def assert_hermitian(a: np.ndarray, tol: float = HERMITICITY_TOL,
                     name: str = "operator") -> np.ndarray:
    """Return ``a`` as a complex array, raising if it is not Hermitian.

    Hermiticity is measured in the max norm: max |a - a^dagger| <= tol.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    dev = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if dev > tol:
        raise ValueError(
            f"{name} is not Hermitian: max |A - A^dagger| = {dev:.3e} > {tol:.3e}")
    return a


def assert_density_matrix(rho: np.ndarray, tol: float = HERMITICITY_TOL,
                          trace_tol: float = TRACE_TOL,
                          eig_floor: float = EIGENVALUE_FLOOR) -> np.ndarray:
    """Validate Hermiticity, unit trace, and positivity of a density matrix."""
    rho = assert_hermitian(rho, tol, "density matrix")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace is {tr:.12g}, expected 1")
    lowest = float(np.min(np.linalg.eigvalsh(rho)))
    if lowest < eig_floor:
        raise ValueError(f"density matrix has negative eigenvalue {lowest:.3e}")
    return rho


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Flatten a d x d operator row-major: vec[m*d + n] = rho[m, n]."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1)


def devectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize`; the length must be a perfect square."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    d = math.isqrt(v.size)
    if d * d != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return v.reshape(d, d)


def build_liouvillian(H: np.ndarray, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Commutator superoperator of a Hermitian H: L vec(rho) = vec([H, rho]).

    The returned matrix is Hermitian; its eigenvalues are the pairwise
    differences of the eigenvalues of H.
    """
    H = assert_hermitian(H, tol, "Hamiltonian")
    eye = np.eye(H.shape[0])
    return np.kron(H, eye) - np.kron(eye, H.T)


def exact_evolve(H: np.ndarray, rho0: np.ndarray, t: float,
                 tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Unitary evolution rho(t) = exp(-iHt) rho0 exp(+iHt) via eigendecomposition."""
    if not np.isfinite(t):
        raise ValueError(f"evolution time must be finite, got {t!r}")
    H = assert_hermitian(H, tol, "Hamiltonian")
    rho0 = np.asarray(rho0, dtype=complex)
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * t)) @ V.conj().T
    return U @ rho0 @ U.conj().T


def propagator_apply(A: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
    """Apply exp(t*A) to a vector (or stacked columns) by dense Pade expm.

    A is generally non-normal, so scaling-and-squaring is used rather than
    an eigendecomposition.
    """
    A = np.asarray(A, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if not np.isfinite(t):
        raise ValueError(f"propagation time must be finite, got {t!r}")
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(v)):
        raise ValueError("propagator input contains non-finite entries")
    return scipy.linalg.expm(t * A) @ v


def propagator_step(A: np.ndarray, dt: float) -> np.ndarray:
    """One-step propagator exp(dt*A), reusable across a uniform time grid."""
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("propagator generator contains non-finite entries")
    return scipy.linalg.expm(dt * A)


def resolvent_apply(A: np.ndarray, z: complex, v: np.ndarray,
                    residual_tol: float = RESIDUAL_TOL,
                    condition_limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Solve (z*1 + A) x = v by a direct dense solve, exactly in z.

    Accepts a single vector or stacked column vectors.  Raises
    ``numpy.linalg.LinAlgError`` naming z when the shifted matrix is
    singular or its condition number exceeds ``condition_limit``, or when
    the relative residual of the solve exceeds ``residual_tol``.
    """
    A = np.asarray(A, dtype=complex)
    v = np.asarray(v, dtype=complex)
    M = z * np.eye(A.shape[0]) + A
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > condition_limit:
        raise np.linalg.LinAlgError(
            f"resolvent is singular or ill-conditioned at z = {z!r} "
            f"(condition estimate {cond:.3e} > {condition_limit:.1e})")
    x = np.linalg.solve(M, v)
    scale = float(np.max(np.abs(v))) or 1.0
    residual = float(np.max(np.abs(M @ x - v))) / scale
    if residual > residual_tol:
        raise np.linalg.LinAlgError(
            f"resolvent solve at z = {z!r} left relative residual {residual:.3e}")
    return x


@dataclass(frozen=True)
class TlsModel:
    """Two-level system with splitting epsilon and coupling delta.

    The Hamiltonian couples the two levels symmetrically and places the
    distinguished state |0> at energy -epsilon, so that the conserved
    energy of the |0><0| initial condition is -epsilon.  ``energy_E``
    optionally pins that conserved value for kernel constructions that
    depend on it; when unset, builders default to the |0><0| value.
    """

    epsilon: float
    delta: float
    energy_E: float | None = None

    @property
    def Omega(self) -> float:
        """Rabi frequency sqrt(epsilon**2 + delta**2) of the exact dynamics."""
        return math.hypot(self.epsilon, self.delta)

    @property
    def omega(self) -> float:
        """Kernel frequency sqrt(epsilon**2 + delta**2 / 2) of the single-population scheme."""
        return math.sqrt(self.epsilon ** 2 + 0.5 * self.delta ** 2)

    def hamiltonian(self) -> np.ndarray:
        # Basis ordered (|0>, |1>); <0|H|0> = -epsilon fixes the sign of the
        # conserved energy and the orientation of the 4x4 generator.
        return np.array([[-self.epsilon, self.delta],
                         [self.delta, self.epsilon]], dtype=complex)

    def energy_for(self, rho0: np.ndarray) -> float:
        """Conserved energy Tr{H rho0} of a given initial state."""
        return float(np.real(np.trace(self.hamiltonian() @ np.asarray(rho0))))

    def exact_population(self, times: np.ndarray) -> np.ndarray:
        """Closed-form population of |0> for the |0><0| initial condition."""
        times = np.asarray(times, dtype=float)
        if self.Omega == 0.0:
            return np.ones_like(times)
        return 1.0 - (self.delta / self.Omega) ** 2 * np.sin(self.Omega * times) ** 2
