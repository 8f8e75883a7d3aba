"""Projection superoperators onto reduced components, and conserved-charge frames.

A component projector picks out one matrix element |m><n| of the system's
reduced density matrix against a fixed reference bath state:

    P^{mn} rho = (|m><n| (x) rho_B) Tr{ (|n><m| (x) I_B) rho }.

Sums of component projectors over an index set containing (0,0) define the
"relevant" part of the state.  Conserved charges are Hermitian operators
commuting with the Hamiltonian; together with a distinguished observable
they define a unitary change of basis on the vectorized state in which the
charge coordinates are constants of motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .liouville import (
    assert_density_matrix,
    assert_hermitian,
    build_liouvillian,
    devectorize,
    vectorize,
)

ORTHONORMALITY_TOL = 1e-10
DEPENDENCE_TOL = 1e-8
REORTHOGONALIZE_TOL = 1e-8
SPECTRUM_TOL = 1e-9


def _as_bath_ref(bath_ref: np.ndarray | None, bath_dim: int) -> np.ndarray:
    """Reference bath state; defaults to the maximally mixed state."""
    if bath_ref is None:
        return np.eye(bath_dim, dtype=complex) / bath_dim
    bath_ref = assert_density_matrix(bath_ref)
    if bath_ref.shape[0] != bath_dim:
        raise ValueError(
            f"bath reference state has dimension {bath_ref.shape[0]}, expected {bath_dim}")
    return bath_ref


@dataclass(frozen=True, eq=False)
class System:
    """A finite closed system split into a D-level part and a bath part.

    ``hamiltonian`` acts on the full (system_dim * bath_dim)-dimensional
    Hilbert space with the system index slow (kron ordering system (x) bath).
    ``bath_ref`` is the reference bath state used by projectors built from
    this system; it defaults to maximally mixed.
    """

    hamiltonian: np.ndarray
    system_dim: int
    bath_dim: int = 1
    bath_ref: np.ndarray | None = None

    def __post_init__(self):
        H = assert_hermitian(self.hamiltonian, name="Hamiltonian")
        if self.system_dim < 1 or self.bath_dim < 1:
            raise ValueError("system_dim and bath_dim must be positive")
        if H.shape[0] != self.system_dim * self.bath_dim:
            raise ValueError(
                f"Hamiltonian dimension {H.shape[0]} does not equal "
                f"system_dim*bath_dim = {self.system_dim * self.bath_dim}")
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "bath_ref", _as_bath_ref(self.bath_ref, self.bath_dim))

    @property
    def dim(self) -> int:
        return self.system_dim * self.bath_dim

    def projector_spec(self, index_set) -> "ProjectorSpec":
        return ProjectorSpec(self.system_dim, self.bath_dim, tuple(index_set), self.bath_ref)

    def population_spec(self, labels=None) -> "ProjectorSpec":
        labels = range(self.system_dim) if labels is None else labels
        return self.projector_spec([(n, n) for n in labels])

    def population_observable(self, n: int) -> np.ndarray:
        """The operator |n><n| (x) I_B whose expectation is the population of |n>."""
        E = np.zeros((self.system_dim, self.system_dim), dtype=complex)
        E[n, n] = 1.0
        return np.kron(E, np.eye(self.bath_dim))

    def ket0_density(self) -> np.ndarray:
        """Factorized initial state |0><0| (x) bath_ref."""
        E = np.zeros((self.system_dim, self.system_dim), dtype=complex)
        E[0, 0] = 1.0
        return np.kron(E, self.bath_ref)

    @classmethod
    def tls(cls, epsilon: float, delta: float) -> "System":
        from .liouville import TlsModel
        return cls(TlsModel(epsilon, delta).hamiltonian(), system_dim=2, bath_dim=1)

    @classmethod
    def random(cls, system_dim: int, bath_dim: int, seed: int) -> "System":
        """Seeded random Hermitian system, normalized to unit spectral radius."""
        rng = np.random.default_rng(seed)
        d = system_dim * bath_dim
        A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        H = 0.5 * (A + A.conj().T)
        H /= max(np.max(np.abs(np.linalg.eigvalsh(H))), 1e-12)
        B = rng.standard_normal((bath_dim, bath_dim)) + 1j * rng.standard_normal((bath_dim, bath_dim))
        bath = B @ B.conj().T
        bath /= np.trace(bath).real
        return cls(H, system_dim=system_dim, bath_dim=bath_dim, bath_ref=bath)


@dataclass(frozen=True, eq=False)
class ProjectorSpec:
    """Index set of relevant components (m, n) plus the reference bath state.

    The pair (0, 0) must be present: the |0> population is the distinguished
    component throughout.  Pairs are stored with (0, 0) first and the rest
    sorted, which fixes row/column ordering of every kernel matrix.
    """

    system_dim: int
    bath_dim: int
    index_set: tuple
    bath_ref: np.ndarray | None = None

    def __post_init__(self):
        if self.system_dim < 1 or self.bath_dim < 1:
            raise ValueError("system_dim and bath_dim must be positive")
        pairs = [tuple(int(i) for i in p) for p in self.index_set]
        if len(set(pairs)) != len(pairs):
            raise ValueError(f"duplicate index pairs in {pairs}")
        for m, n in pairs:
            if not (0 <= m < self.system_dim and 0 <= n < self.system_dim):
                raise ValueError(
                    f"index pair ({m}, {n}) out of range for system_dim {self.system_dim}")
        if (0, 0) not in pairs:
            raise ValueError("index set must contain the distinguished pair (0, 0)")
        ordered = ((0, 0),) + tuple(sorted(p for p in pairs if p != (0, 0)))
        object.__setattr__(self, "index_set", ordered)
        object.__setattr__(self, "bath_ref", _as_bath_ref(self.bath_ref, self.bath_dim))

    @property
    def index_pairs(self) -> tuple:
        return self.index_set

    @property
    def dim(self) -> int:
        return self.system_dim * self.bath_dim


def component_vectors(m: int, n: int, system_dim: int, bath_dim: int,
                      bath_ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column/row vectors (u, w) of the rank-one superoperator P^{mn} = u w^T.

    u = vec(|m><n| (x) rho_B) is the injected operator; the plain dot
    w . vec(rho) equals the contraction Tr{(|n><m| (x) I_B) rho}.
    """
    if not (0 <= m < system_dim and 0 <= n < system_dim):
        raise ValueError(f"state labels ({m}, {n}) out of range for dimension {system_dim}")
    E = np.zeros((system_dim, system_dim), dtype=complex)
    E[m, n] = 1.0
    u = vectorize(np.kron(E, bath_ref))
    w = vectorize(np.kron(E, np.eye(bath_dim)))
    return u, w


def build_component_projector(m: int, n: int, system_dim: int,
                              bath_ref: np.ndarray | None = None) -> np.ndarray:
    """Projection superoperator onto the |m><n| component of the reduced state."""
    bath_ref = _as_bath_ref(bath_ref, 1 if bath_ref is None else bath_ref.shape[0])
    u, w = component_vectors(m, n, system_dim, bath_ref.shape[0], bath_ref)
    return np.outer(u, w)


def build_population_projector(n: int, system_dim: int,
                               bath_ref: np.ndarray | None = None) -> np.ndarray:
    """Projection superoperator onto the population of |n> (the (n, n) component)."""
    return build_component_projector(n, n, system_dim, bath_ref)


def build_projector_sum(spec: ProjectorSpec) -> tuple[np.ndarray, np.ndarray]:
    """The summed projector P over a spec's index set and its complement Q = 1 - P."""
    dsq = spec.dim ** 2
    P = np.zeros((dsq, dsq), dtype=complex)
    for m, n in spec.index_pairs:
        u, w = component_vectors(m, n, spec.system_dim, spec.bath_dim, spec.bath_ref)
        P += np.outer(u, w)
    return P, np.eye(dsq) - P


def find_conserved_charges(H: np.ndarray, max_count: int,
                           commute_tol: float = ORTHONORMALITY_TOL,
                           rank_tol: float = 1e-10) -> list[np.ndarray]:
    """Traceless Hermitian operators commuting with H, up to ``max_count`` of them.

    The nullspace of the commutator superoperator is computed by SVD; it is
    closed under Hermitian conjugation, so the Hermitian/anti-Hermitian parts
    of the nullspace vectors span all commuting observables.  The identity
    direction is removed and the rest orthonormalized in the Hilbert-Schmidt
    inner product.
    """
    H = assert_hermitian(H, name="Hamiltonian")
    d = H.shape[0]
    L = build_liouvillian(H)
    null = scipy.linalg.null_space(L, rcond=rank_tol)
    eye = np.eye(d, dtype=complex)
    basis: list[np.ndarray] = []
    for col in null.T:
        X = devectorize(col)
        for cand in (0.5 * (X + X.conj().T), -0.5j * (X - X.conj().T)):
            cand = cand - (np.trace(cand) / d) * eye
            v = vectorize(cand)
            for b in basis:
                v = v - (np.vdot(b, v)) * b
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                basis.append(v / norm)
    charges = []
    for v in basis[:max_count]:
        C = devectorize(v)
        C = 0.5 * (C + C.conj().T)
        residual = float(np.max(np.abs(H @ C - C @ H)))
        if residual > commute_tol:
            raise RuntimeError(f"charge candidate fails to commute (residual {residual:.3e})")
        charges.append(C)
    return charges


@dataclass(eq=False)
class ChargeSet:
    """Orthonormal conserved charges, led by the scaled identity, with their values.

    operators[0] = I/sqrt(d); operators[k] for k >= 1 are traceless and
    mutually orthonormal in the Hilbert-Schmidt inner product.  values[k]
    = Tr{C_k rho0} for the initial state the set was built from.
    """

    operators: list
    values: np.ndarray

    @property
    def count(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]


def orthonormalize_charges(raw: list, rho0: np.ndarray) -> ChargeSet:
    """Gram-Schmidt a raw charge list against I/sqrt(d) into a :class:`ChargeSet`.

    Modified Gram-Schmidt with a re-orthogonalization pass whenever the
    first pass leaves a residual overlap above ``REORTHOGONALIZE_TOL``.
    A raw operator lying in the span of the identity and its predecessors
    raises, naming the offending position.
    """
    rho0 = assert_density_matrix(rho0)
    d = rho0.shape[0]
    basis = [vectorize(np.eye(d, dtype=complex) / math.sqrt(d))]
    for idx, op in enumerate(raw):
        op = assert_hermitian(op, name=f"charge operator {idx}")
        if op.shape[0] != d:
            raise ValueError(f"charge operator {idx} has dimension {op.shape[0]}, expected {d}")
        v = vectorize(op)
        scale = np.linalg.norm(v)
        for b in basis:
            v = v - np.vdot(b, v) * b
        if max(abs(np.vdot(b, v)) for b in basis) > REORTHOGONALIZE_TOL * max(scale, 1.0):
            for b in basis:
                v = v - np.vdot(b, v) * b
        if np.linalg.norm(v) <= DEPENDENCE_TOL * max(scale, 1.0):
            raise ValueError(
                f"charge operator {idx} is linearly dependent on the identity "
                "and preceding charges")
        basis.append(v / np.linalg.norm(v))
    operators = []
    for v in basis:
        C = devectorize(v)
        operators.append(0.5 * (C + C.conj().T))
    values = np.array([np.trace(C @ rho0).real for C in operators])
    return ChargeSet(operators=operators, values=values)


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal basis of the real vector space of d x d Hermitian matrices."""
    ops = []
    for m in range(d):
        E = np.zeros((d, d), dtype=complex)
        E[m, m] = 1.0
        ops.append(E)
    for m in range(d):
        for n in range(m + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[m, n] = S[n, m] = 1.0 / math.sqrt(2.0)
            ops.append(S)
            A = np.zeros((d, d), dtype=complex)
            A[m, n] = 1j / math.sqrt(2.0)
            A[n, m] = -1j / math.sqrt(2.0)
            ops.append(A)
    return ops


@dataclass(eq=False)
class RotationFrame:
    """Unitary change of basis on vectorized states adapted to conserved charges.

    Row 0 of ``rotation`` reads off the orthogonalized distinguished
    observable, rows 1..N the charge coordinates (constants of motion), and
    the remaining rows an arbitrary orthonormal completion.  The rotated
    generator ``rotated_liouvillian`` = R L R^dagger shares the spectrum of L.
    """

    rotation: np.ndarray
    normalization: float
    distinguished: np.ndarray
    rotated_liouvillian: np.ndarray
    completed_basis: tuple
    charges: ChargeSet
    observable: np.ndarray
    charge_overlaps: np.ndarray

    @property
    def charge_count(self) -> int:
        return self.charges.count


def build_rotation_frame(charges: ChargeSet, observable: np.ndarray,
                         L: np.ndarray,
                         unitarity_tol: float = ORTHONORMALITY_TOL,
                         spectrum_tol: float = SPECTRUM_TOL) -> RotationFrame:
    """Gram-Schmidt the observable against the charges and complete to a rotation.

    Raises when the observable lies in the span of the charges; the scalar
    reduced equation needs an independent distinguished direction.
    """
    observable = assert_hermitian(observable, name="observable")
    d = observable.shape[0]
    if charges.dim != d:
        raise ValueError(f"charge dimension {charges.dim} does not match observable ({d})")
    obs_vec = vectorize(observable)
    charge_vecs = [vectorize(C) for C in charges.operators]
    overlaps = np.array([np.vdot(c, obs_vec).real for c in charge_vecs])
    o_raw = obs_vec - sum(ov * c for ov, c in zip(overlaps, charge_vecs))
    norm = float(np.linalg.norm(o_raw))
    if norm <= DEPENDENCE_TOL * max(float(np.linalg.norm(obs_vec)), 1.0):
        raise ValueError("observable is a linear combination of conserved charges")
    o_vec = o_raw / norm

    basis = hermitian_basis(d)
    coords = np.empty((d * d, 1 + len(charge_vecs)))
    for j, v in enumerate([o_vec] + charge_vecs):
        op = devectorize(v)
        coords[:, j] = [np.trace(b.conj().T @ op).real for b in basis]
    Qfull, _ = np.linalg.qr(coords, mode="complete")
    residual_ops = []
    for j in range(coords.shape[1], d * d):
        R_op = sum(Qfull[i, j] * basis[i] for i in range(d * d))
        residual_ops.append(vectorize(R_op))

    rows = [o_vec] + charge_vecs + residual_ops
    R = np.array([np.conj(r) for r in rows])
    unit_dev = float(np.max(np.abs(R @ R.conj().T - np.eye(d * d))))
    if unit_dev > unitarity_tol:
        raise RuntimeError(f"rotation failed unitarity check ({unit_dev:.3e})")
    L_rot = R @ L @ R.conj().T
    spec_dev = float(np.max(np.abs(
        np.sort(np.linalg.eigvalsh(L)) - np.sort(np.linalg.eigvalsh(L_rot)))))
    if spec_dev > spectrum_tol:
        raise RuntimeError(f"rotation failed to preserve the spectrum ({spec_dev:.3e})")
    labels = tuple(f"r{i + 1}" for i in range(len(residual_ops)))
    return RotationFrame(
        rotation=R,
        normalization=norm,
        distinguished=devectorize(o_vec),
        rotated_liouvillian=L_rot,
        completed_basis=labels,
        charges=charges,
        observable=observable,
        charge_overlaps=overlaps,
    )
