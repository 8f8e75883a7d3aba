"""Memory kernels, generalized forces, inhomogeneities, and their Laplace transforms.

All sampled quantities are matrix elements over an index set of reduced
components (m, n).  With P the summed projector of a spec and Q = 1 - P,
the element conventions are

    K[(mn),(m'n')](tau) =      Tr{ (|n><m| (x) I_B) L e^{-i tau Q L} Q L (|m'><n'| (x) rho_B) }
    F[(mn),(m'n')](tau) = i *  Tr{ (|n><m| (x) I_B) L e^{-i tau Q L}     (|m'><n'| (x) rho_B) }
    theta[(mn)](t)      = -i * Tr{ (|n><m| (x) I_B) L e^{-i t   Q L} Q vec(rho0) }

so that K = dF/dtau and F vanishes at tau = 0 on population pairs.  Kernels
are sampled from the direct superoperator product, never by differentiating
F; the derivative relation is kept as a cross-check.  Laplace-domain values
use exact shifted solves, with no time quadrature.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .liouville import (
    TlsModel,
    assert_density_matrix,
    build_liouvillian,
    propagator_step,
    resolvent_apply,
    vectorize,
)
from .projectors import ProjectorSpec, System, build_projector_sum, component_vectors

KIND_KERNEL = "K"
KIND_FORCE = "F"
KIND_THETA = "theta"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_j = j*dt for j = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @property
    def n_points(self) -> int:
        return self.n_steps + 1

    @property
    def t_max(self) -> float:
        return self.dt * self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def from_duration(cls, dt: float, t_max: float) -> "TimeGrid":
        if not (t_max >= dt > 0):
            raise ValueError(f"need t_max >= dt > 0, got dt={dt!r}, t_max={t_max!r}")
        return cls(dt=dt, n_steps=int(round(t_max / dt)))


@dataclass(eq=False)
class KernelSamples:
    """Sampled matrix-valued memory data on a :class:`TimeGrid`.

    ``values`` has shape (n_out, n_in, n_times); rows are labeled by
    ``index_pairs`` and columns by ``in_pairs`` (defaulting to the same
    list).  Inhomogeneity samples carry a single unlabeled column.  ``kind``
    is one of "K", "F", "theta".
    """

    grid: TimeGrid
    index_pairs: tuple
    values: np.ndarray
    kind: str
    in_pairs: tuple | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.in_pairs is None:
            self.in_pairs = self.index_pairs
        if self.values.shape != (len(self.index_pairs), len(self.in_pairs),
                                 self.grid.n_points):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.index_pairs)} x {len(self.in_pairs)} pairs over "
                f"{self.grid.n_points} grid points")
        if self.kind not in (KIND_KERNEL, KIND_FORCE, KIND_THETA):
            raise ValueError(f"unknown sample kind {self.kind!r}")

    @staticmethod
    def _lookup(pairs: tuple, pair) -> int:
        pair = tuple(int(i) for i in pair)
        try:
            return pairs.index(pair)
        except ValueError:
            raise KeyError(f"pair {pair} not among sampled pairs {pairs}") from None

    def element(self, pair_out, pair_in=None) -> np.ndarray:
        """Time series for one (out, in) pair of indices."""
        i = self._lookup(self.index_pairs, pair_out)
        j = 0 if pair_in is None else self._lookup(self.in_pairs, pair_in)
        return self.values[i, j]

    def matrix_at(self, j: int) -> np.ndarray:
        """The (n_out, n_in) matrix at grid point j."""
        return self.values[:, :, j]


class KernelScheme(enum.Enum):
    """Closed-form kernel families for the two-level system."""

    PROJECTED_SINGLE = "projected_single"
    PROJECTED_PAIR = "projected_pair"
    CONSTRAINT_CONSTANT = "constraint_constant"
    CONSTRAINT_OSCILLATING = "constraint_oscillating"


def _normalize_pairs(pairs) -> tuple:
    return tuple(tuple(int(i) for i in p) for p in pairs)


def _check_spec(system: System, spec: ProjectorSpec) -> None:
    if (spec.system_dim, spec.bath_dim) != (system.system_dim, system.bath_dim):
        raise ValueError(
            f"projector spec dims ({spec.system_dim}, {spec.bath_dim}) do not match "
            f"system dims ({system.system_dim}, {system.bath_dim})")


def _contraction_arrays(system: System, spec: ProjectorSpec, pairs):
    """Rows W (plain-dot contractions) and injection columns U for a pair list."""
    pairs = spec.index_pairs if pairs is None else _normalize_pairs(pairs)
    cols, rows = [], []
    for m, n in pairs:
        u, w = component_vectors(m, n, spec.system_dim, spec.bath_dim, spec.bath_ref)
        cols.append(u)
        rows.append(w)
    return pairs, np.array(rows), np.column_stack(cols)


def _sample_propagated(rows: np.ndarray, generator: np.ndarray, X0: np.ndarray,
                       grid: TimeGrid, prefactor: complex) -> np.ndarray:
    """Sample prefactor * rows @ e^{-i t_j generator} @ X0 over the grid.

    The single-step propagator is built once by scaling-and-squaring and the
    columns advanced by repeated application.
    """
    step = propagator_step(generator, -1j * grid.dt)
    n_out, n_in = rows.shape[0], X0.shape[1]
    out = np.empty((n_out, n_in, grid.n_points), dtype=complex)
    X = X0.astype(complex)
    out[:, :, 0] = rows @ X
    for j in range(1, grid.n_points):
        X = step @ X
        out[:, :, j] = rows @ X
    return prefactor * out


def kernel_matrix(system: System, spec: ProjectorSpec, grid: TimeGrid,
                  pairs=None) -> KernelSamples:
    """Memory kernel matrix K(tau; P) sampled on the grid.

    ``pairs`` optionally overrides the contraction index list while keeping
    the projector of ``spec`` inside the propagator, which is how kernels of
    a small projector are compared across a larger index set.
    """
    _check_spec(system, spec)
    L = build_liouvillian(system.hamiltonian)
    _, Q = build_projector_sum(spec)
    pairs, W, U = _contraction_arrays(system, spec, pairs)
    values = _sample_propagated(W @ L, Q @ L, Q @ (L @ U), grid, 1.0)
    return KernelSamples(grid=grid, index_pairs=pairs, values=values, kind=KIND_KERNEL)


def f_matrix(system: System, spec: ProjectorSpec, grid: TimeGrid,
             pairs=None) -> KernelSamples:
    """Generalized-force matrix F(tau; P); its time derivative is the kernel."""
    _check_spec(system, spec)
    L = build_liouvillian(system.hamiltonian)
    _, Q = build_projector_sum(spec)
    pairs, W, U = _contraction_arrays(system, spec, pairs)
    values = _sample_propagated(W @ L, Q @ L, U, grid, 1j)
    return KernelSamples(grid=grid, index_pairs=pairs, values=values, kind=KIND_FORCE)


def kernel_element(system: System, spec: ProjectorSpec, pair_out, pair_in,
                   grid: TimeGrid) -> KernelSamples:
    """Single kernel element K[(pair_out),(pair_in)](tau; P)."""
    _check_spec(system, spec)
    L = build_liouvillian(system.hamiltonian)
    _, Q = build_projector_sum(spec)
    out_pairs, W_out, _ = _contraction_arrays(system, spec, [pair_out])
    in_pairs, _, U_in = _contraction_arrays(system, spec, [pair_in])
    values = _sample_propagated(W_out @ L, Q @ L, Q @ (L @ U_in), grid, 1.0)
    return KernelSamples(grid=grid, index_pairs=out_pairs, values=values,
                         kind=KIND_KERNEL, in_pairs=in_pairs)


def f_element(system: System, spec: ProjectorSpec, pair_out, pair_in,
              grid: TimeGrid) -> KernelSamples:
    """Single generalized-force element F[(pair_out),(pair_in)](tau; P)."""
    _check_spec(system, spec)
    L = build_liouvillian(system.hamiltonian)
    _, Q = build_projector_sum(spec)
    out_pairs, W_out, _ = _contraction_arrays(system, spec, [pair_out])
    in_pairs, _, U_in = _contraction_arrays(system, spec, [pair_in])
    values = _sample_propagated(W_out @ L, Q @ L, U_in, grid, 1j)
    return KernelSamples(grid=grid, index_pairs=out_pairs, values=values,
                         kind=KIND_FORCE, in_pairs=in_pairs)


def theta_inhomogeneity(system: System, spec: ProjectorSpec, rho0: np.ndarray,
                        grid: TimeGrid) -> KernelSamples:
    """Inhomogeneity theta(t) = -i P L e^{-i t Q L} Q rho0, elementwise over the spec.

    Identically zero whenever Q vec(rho0) = 0, i.e. for initial states fully
    reproduced by the projector.
    """
    _check_spec(system, spec)
    rho0 = assert_density_matrix(rho0)
    L = build_liouvillian(system.hamiltonian)
    _, Q = build_projector_sum(spec)
    pairs, W, _ = _contraction_arrays(system, spec, None)
    x0 = (Q @ vectorize(rho0)).reshape(-1, 1)
    values = _sample_propagated(W @ L, Q @ L, x0, grid, -1j)
    return KernelSamples(grid=grid, index_pairs=pairs, values=values,
                         kind=KIND_THETA, in_pairs=(None,))


def laplace_f_matrix(system: System, spec: ProjectorSpec, z: complex,
                     pairs=None, condition_limit: float = 1e12) -> np.ndarray:
    """Exact Laplace transform of the generalized-force matrix at Re z > 0.

    Each element is i * Tr{ (|n><m| (x) I_B) L (z + i Q L)^{-1} (|m'><n'| (x) rho_B) },
    computed with one shifted dense solve; no time quadrature enters.
    """
    if not (np.real(z) > 0):
        raise ValueError(f"Laplace point must satisfy Re z > 0, got z = {z!r}")
    _check_spec(system, spec)
    L = build_liouvillian(system.hamiltonian)
    _, Q = build_projector_sum(spec)
    pairs, W, U = _contraction_arrays(system, spec, pairs)
    Y = resolvent_apply(1j * (Q @ L), z, U, condition_limit=condition_limit)
    return 1j * ((W @ L) @ Y)


def default_z_points() -> list[complex]:
    """Sixteen right-half-plane sample points spanning decay and oscillation scales."""
    return [complex(a, b) for a in (0.25, 0.5, 1.0, 2.0) for b in (-3.0, -1.0, 1.0, 3.0)]


def _resolve_scheme(scheme) -> KernelScheme:
    if isinstance(scheme, KernelScheme):
        return scheme
    try:
        return KernelScheme(str(scheme))
    except ValueError:
        valid = ", ".join(s.value for s in KernelScheme)
        raise ValueError(f"unknown kernel scheme {scheme!r}; valid schemes: {valid}") from None


def closed_form_tls_kernels(model: TlsModel, scheme, grid: TimeGrid,
                            energy: float | None = None,
                            energy_term_over_delta: bool = False) -> KernelSamples:
    """Closed-form two-level-system kernels for the four reduction schemes.

    ``projected_single`` is the scalar kernel 2*delta^2*cos(2*omega*tau) of the
    |0>-population projector; ``projected_pair`` and ``constraint_oscillating``
    share the oscillating matrix with elements +/- 2*delta^2*cos(2*epsilon*tau);
    ``constraint_constant`` is the time-independent matrix whose energy term is
    2*E*epsilon.  ``energy_term_over_delta`` switches that term to
    2*E*epsilon/delta, an alternative ruled out by the dynamics oracle in the
    acceptance suite and kept only so the inconsistency stays demonstrable.
    """
    scheme = _resolve_scheme(scheme)
    t = grid.times
    eps, delta = model.epsilon, model.delta
    if scheme is KernelScheme.PROJECTED_SINGLE:
        k = 2.0 * delta ** 2 * np.cos(2.0 * model.omega * t)
        values = k[np.newaxis, np.newaxis, :]
        pairs = ((0, 0),)
    elif scheme in (KernelScheme.PROJECTED_PAIR, KernelScheme.CONSTRAINT_OSCILLATING):
        k = 2.0 * delta ** 2 * np.cos(2.0 * eps * t)
        values = np.array([[k, -k], [-k, k]])
        pairs = ((0, 0), (1, 1))
    else:
        E = energy if energy is not None else (
            model.energy_E if model.energy_E is not None else -eps)
        e_term = 2.0 * E * eps / delta if energy_term_over_delta else 2.0 * E * eps
        base = 2.0 * (delta ** 2 + eps ** 2)
        ones = np.ones_like(t)
        values = np.array([[(base + e_term) * ones, (-base + e_term) * ones],
                           [(-base - e_term) * ones, (base - e_term) * ones]])
        pairs = ((0, 0), (1, 1))
    return KernelSamples(grid=grid, index_pairs=pairs, values=values, kind=KIND_KERNEL)


def closed_form_tls_forces(model: TlsModel, scheme, grid: TimeGrid) -> KernelSamples:
    """Closed-form generalized forces for the two projected TLS schemes."""
    scheme = _resolve_scheme(scheme)
    t = grid.times
    delta = model.delta
    if scheme is KernelScheme.PROJECTED_SINGLE:
        w = model.omega
        f = (delta ** 2 / w) * np.sin(2.0 * w * t) if w > 0 else np.zeros_like(t)
        return KernelSamples(grid=grid, index_pairs=((0, 0),),
                             values=f[np.newaxis, np.newaxis, :], kind=KIND_FORCE)
    if scheme is KernelScheme.PROJECTED_PAIR:
        eps = model.epsilon
        if eps != 0.0:
            f = (delta ** 2 / eps) * np.sin(2.0 * eps * t)
        else:
            f = 2.0 * delta ** 2 * t
        values = np.array([[f, -f], [-f, f]])
        return KernelSamples(grid=grid, index_pairs=((0, 0), (1, 1)),
                             values=values, kind=KIND_FORCE)
    raise ValueError(f"no closed-form forces for scheme {scheme.value!r}")
