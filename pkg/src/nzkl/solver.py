"""Volterra integro-differential master equations: assembly and solution.

Every problem has the form

    d sigma_i / dt = drive_i(t) - sum_j int_0^t K_ij(tau) (sigma_j(t - tau) - offset_j) dtau

with sampled kernel matrix K, optional drive samples, and a constant offset
subtracted from the unknown inside the memory integral (zero except in the
charge-rotated form).  The solver uses trapezoidal product integration for
the convolution and the trapezoidal rule for the time step; the unknown at
the new step enters with weight dt/2 * K(0) and is obtained from one small
prefactored linear solve per step, giving unconditional second order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .kernels import (
    KIND_KERNEL,
    KernelSamples,
    KernelScheme,
    TimeGrid,
    _sample_propagated,
    closed_form_tls_kernels,
    kernel_matrix,
)
from .liouville import TlsModel, assert_density_matrix, build_liouvillian, vectorize
from .projectors import (
    ProjectorSpec,
    RotationFrame,
    System,
    build_projector_sum,
    build_rotation_frame,
    find_conserved_charges,
    orthonormalize_charges,
)

PROJECTION_TOL = 1e-10


@dataclass(eq=False)
class GqmeProblem:
    """A memory-convolution master equation ready for :func:`solve_volterra`."""

    grid: TimeGrid
    kernel: KernelSamples
    drive: np.ndarray | None
    offset: np.ndarray
    initial: np.ndarray
    labels: tuple

    def __post_init__(self):
        if self.kernel.kind != KIND_KERNEL:
            raise ValueError(f"problem kernel must have kind 'K', got {self.kernel.kind!r}")
        n = len(self.initial)
        if self.kernel.values.shape[:2] != (n, n):
            raise ValueError(
                f"kernel block {self.kernel.values.shape[:2]} does not match "
                f"{n} unknowns")
        if self.kernel.grid != self.grid:
            raise ValueError("kernel grid does not match problem grid")
        self.initial = np.asarray(self.initial, dtype=complex)
        self.offset = np.asarray(self.offset, dtype=complex)
        if self.offset.shape != (n,):
            raise ValueError(f"offset shape {self.offset.shape}, expected ({n},)")
        if self.drive is not None:
            self.drive = np.asarray(self.drive, dtype=complex)
            if self.drive.shape != (n, self.grid.n_points):
                raise ValueError(
                    f"drive shape {self.drive.shape}, expected ({n}, {self.grid.n_points})")
        if len(self.labels) != n:
            raise ValueError("one label per unknown is required")

    @property
    def n_vars(self) -> int:
        return len(self.initial)


@dataclass(eq=False)
class Trajectory:
    """Solution samples, one row of ``values`` per labeled unknown."""

    grid: TimeGrid
    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (len(self.labels), self.grid.n_points):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.labels)} labels over {self.grid.n_points} points")

    def component(self, label: str) -> np.ndarray:
        return self.values[self.labels.index(label)]

    def select(self, labels) -> "Trajectory":
        labels = tuple(labels)
        rows = [self.labels.index(lb) for lb in labels]
        return Trajectory(grid=self.grid, labels=labels, values=self.values[rows])


def solve_volterra(problem: GqmeProblem, stability_limit: float = 1.0) -> Trajectory:
    """March the memory-convolution equation with trapezoidal product integration.

    Rejects grids with dt * ||K(0)||_2 >= ``stability_limit``; the implicit
    per-step solve assumes the new-step memory weight is a small perturbation
    of the identity.
    """
    grid = problem.grid
    dt = grid.dt
    p = problem.n_vars
    K = np.ascontiguousarray(np.moveaxis(problem.kernel.values, 2, 0))  # (n_t, p, p)
    k0_norm = float(np.linalg.norm(K[0], 2))
    if dt * k0_norm >= stability_limit:
        raise ValueError(
            f"stability guard violated: dt * ||K(0)|| = {dt * k0_norm:.3e} >= "
            f"{stability_limit}; choose a smaller dt")
    n_t = grid.n_points
    drive = problem.drive if problem.drive is not None else np.zeros((p, n_t))
    offset = problem.offset

    sigma = np.empty((n_t, p), dtype=complex)
    shifted = np.empty((n_t, p), dtype=complex)  # sigma - offset history
    g = np.empty((n_t, p), dtype=complex)        # right-hand side d sigma/dt
    sigma[0] = problem.initial
    shifted[0] = sigma[0] - offset
    g[0] = drive[:, 0]

    K0 = K[0]
    lu = scipy.linalg.lu_factor(np.eye(p) + (dt * dt / 4.0) * K0)
    half_K0_offset = 0.5 * dt * (K0 @ offset)
    for n in range(1, n_t):
        # Trapezoid weights: full sum over l = 1..n, endpoint l = n halved.
        full = np.einsum("lij,lj->i", K[1:n + 1], shifted[n - 1::-1])
        c_known = dt * (full - 0.5 * (K[n] @ shifted[0]))
        rhs = sigma[n - 1] + 0.5 * dt * (g[n - 1] + drive[:, n] - c_known + half_K0_offset)
        sigma[n] = scipy.linalg.lu_solve(lu, rhs)
        shifted[n] = sigma[n] - offset
        g[n] = drive[:, n] - c_known - 0.5 * dt * (K0 @ shifted[n])
    return Trajectory(grid=grid, labels=tuple(problem.labels), values=sigma.T.copy())


def trapezoid_cumulative(samples: np.ndarray, dt: float) -> np.ndarray:
    """Running trapezoid integral of uniformly sampled values, same length out."""
    samples = np.asarray(samples)
    out = np.zeros_like(samples, dtype=complex)
    out[1:] = np.cumsum(0.5 * dt * (samples[1:] + samples[:-1]))
    return out


def _coerce_system(model_or_system) -> System:
    if isinstance(model_or_system, System):
        return model_or_system
    if isinstance(model_or_system, TlsModel):
        return System(model_or_system.hamiltonian(), system_dim=2, bath_dim=1)
    raise TypeError(f"expected a System or TlsModel, got {type(model_or_system).__name__}")


def _require_projected_initial(spec: ProjectorSpec, rho0: np.ndarray,
                               tol: float = PROJECTION_TOL) -> None:
    _, Q = build_projector_sum(spec)
    leak = float(np.max(np.abs(Q @ vectorize(rho0))))
    if leak > tol:
        raise ValueError(
            f"initial state is not reproduced by the projector (|Q rho0| = {leak:.3e}): "
            "an inhomogeneous term is required; use the rotated builder")


def build_problem_single(model_or_system, grid: TimeGrid,
                         rho0: np.ndarray | None = None) -> GqmeProblem:
    """Scalar equation for the |0> population under the single-population projector.

    Valid for factorized initial data fully captured by the projector; the
    streaming term vanishes identically for population projectors, so the
    equation is a pure memory convolution with no drive.
    """
    system = _coerce_system(model_or_system)
    spec = system.projector_spec([(0, 0)])
    rho0 = system.ket0_density() if rho0 is None else assert_density_matrix(rho0)
    _require_projected_initial(spec, rho0)
    kern = kernel_matrix(system, spec, grid)
    sigma0 = np.trace(system.population_observable(0) @ rho0)
    return GqmeProblem(grid=grid, kernel=kern, drive=None,
                       offset=np.zeros(1), initial=np.array([sigma0]),
                       labels=("sigma0",))


def build_problem_pair_reduced(model_or_system, grid: TimeGrid,
                               rho0: np.ndarray | None = None) -> GqmeProblem:
    """Scalar |0>-population equation from the two-population projector.

    Uses sigma0 + sigma1 = 1 and the vanishing column sums of the
    two-population kernel matrix to eliminate sigma1, leaving the combined
    kernel K00 + K11 and the drive int_0^t K11, which acts like an external
    force.  Requires a two-level system part and the |0><0| (x) rho_B
    initial state.
    """
    system = _coerce_system(model_or_system)
    if system.system_dim != 2:
        raise ValueError("the pair-reduced builder requires a two-level system part")
    spec = system.population_spec()
    expected = system.ket0_density()
    rho0 = expected if rho0 is None else assert_density_matrix(rho0)
    if float(np.max(np.abs(rho0 - expected))) > PROJECTION_TOL:
        raise ValueError(
            "the pair-reduced builder requires the |0><0| (x) rho_B initial state; "
            "an inhomogeneous term is required otherwise; use the rotated builder")
    kern = kernel_matrix(system, spec, grid)
    k00 = kern.element((0, 0), (0, 0))
    k11 = kern.element((1, 1), (1, 1))
    combined = KernelSamples(grid=grid, index_pairs=((0, 0),),
                             values=(k00 + k11)[np.newaxis, np.newaxis, :],
                             kind=KIND_KERNEL)
    drive = trapezoid_cumulative(k11, grid.dt)[np.newaxis, :]
    return GqmeProblem(grid=grid, kernel=combined, drive=drive,
                       offset=np.zeros(1), initial=np.array([1.0 + 0.0j]),
                       labels=("sigma0",))


def build_problem_constraint(model: TlsModel, method, grid: TimeGrid,
                             rho0: np.ndarray | None = None,
                             energy: float | None = None,
                             energy_term_over_delta: bool = False) -> GqmeProblem:
    """Coupled population equations from dynamical constraints alone (no projector).

    ``method`` is "constant" for the time-independent kernels or
    "oscillating" for the kernels that coincide with the two-population
    projection.  The initial state must carry no coherences (the constant
    kernels absorb them into the conserved energy, which defaults to the
    |0><0| value -epsilon unless supplied or derivable from ``rho0``).
    """
    if not isinstance(model, TlsModel):
        raise TypeError("constraint builders are specific to the two-level model")
    scheme = {"constant": KernelScheme.CONSTRAINT_CONSTANT,
              "oscillating": KernelScheme.CONSTRAINT_OSCILLATING}.get(str(method))
    if scheme is None:
        raise ValueError(f"unknown constraint method {method!r}; use 'constant' or 'oscillating'")
    if rho0 is None:
        initial = np.array([1.0, 0.0], dtype=complex)
    else:
        rho0 = assert_density_matrix(rho0)
        if rho0.shape[0] != 2:
            raise ValueError("constraint builders require a bare two-level state")
        if max(abs(rho0[0, 1]), abs(rho0[1, 0])) > PROJECTION_TOL:
            raise ValueError(
                "constraint builders require a coherence-free initial state")
        initial = np.array([rho0[0, 0], rho0[1, 1]])
        if energy is None:
            energy = model.energy_for(rho0)
    kern = closed_form_tls_kernels(model, scheme, grid, energy=energy,
                                   energy_term_over_delta=energy_term_over_delta)
    return GqmeProblem(grid=grid, kernel=kern, drive=None,
                       offset=np.zeros(2), initial=initial,
                       labels=("sigma0", "sigma1"))


def rotated_frame_for_system(system: System, rho0: np.ndarray,
                             max_charges: int | None = None) -> RotationFrame:
    """Charge detection, orthonormalization, and frame construction in one step."""
    d = system.dim
    max_charges = d * d - 2 if max_charges is None else max_charges
    raw = find_conserved_charges(system.hamiltonian, max_charges)
    charges = orthonormalize_charges(raw, rho0)
    L = build_liouvillian(system.hamiltonian)
    return build_rotation_frame(charges, system.population_observable(0), L)


def build_problem_rotated(frame: RotationFrame, rho0: np.ndarray,
                          grid: TimeGrid) -> GqmeProblem:
    """Scalar |0>-population equation in the charge-rotated frame.

    The rotated complement keeps the charge coordinates, so the
    inhomogeneity generally does not vanish even for factorized initial
    data; it enters the drive as N * theta(t).  The conserved charge values
    also shift the unknown inside the memory integral by a constant offset.
    """
    rho0 = assert_density_matrix(rho0)
    L_rot = frame.rotated_liouvillian
    dsq = L_rot.shape[0]
    if rho0.shape[0] ** 2 != dsq:
        raise ValueError(
            f"initial state dimension {rho0.shape[0]} does not match the frame "
            f"({dsq} rotated coordinates)")
    y0 = frame.rotation @ vectorize(rho0)
    n_charges = frame.charge_count
    q_values = y0[1:1 + n_charges].real
    offset_val = float(np.dot(q_values, frame.charge_overlaps))

    row = L_rot[0]                      # e_0^T L'
    x_kernel = L_rot[:, 0].copy()       # Q0 L' e_0
    x_kernel[0] = 0.0
    x_theta = y0.copy()                 # Q0 y0
    x_theta[0] = 0.0
    generator = L_rot.copy()            # Q0 L'
    generator[0, :] = 0.0

    X0 = np.column_stack([x_kernel, x_theta])
    samples = _sample_propagated(row[np.newaxis, :], generator, X0, grid, 1.0)
    kernel_vals = samples[0, 0][np.newaxis, np.newaxis, :]
    theta_vals = -1j * samples[0, 1]
    kern = KernelSamples(grid=grid, index_pairs=((0, 0),), values=kernel_vals,
                         kind=KIND_KERNEL)
    drive = (frame.normalization * theta_vals)[np.newaxis, :]
    sigma0 = np.trace(frame.observable @ rho0)
    return GqmeProblem(grid=grid, kernel=kern, drive=drive,
                       offset=np.array([offset_val], dtype=complex),
                       initial=np.array([sigma0]), labels=("sigma0",))
