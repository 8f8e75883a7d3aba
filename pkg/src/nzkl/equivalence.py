"""Machine checks of the identities tying different projectors' kernels together.

Structurally different reductions carry structurally different memory
kernels, yet produce the same dynamics for the shared observable.  The
checks here make that quantitative: a time-domain convolution identity
between generalized forces, a kernel relation mediated by an auxiliary
response function G, an exact Laplace-domain matrix identity, and the
closed formal solution in Laplace space.  Each check returns an
:class:`IdentityReport` with the measured residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .kernels import (
    KIND_KERNEL,
    KernelSamples,
    KernelScheme,
    TimeGrid,
    closed_form_tls_forces,
    f_matrix,
    laplace_f_matrix,
)
from .liouville import TlsModel, assert_density_matrix, vectorize
from .projectors import ProjectorSpec, System, build_projector_sum, component_vectors
from .solver import GqmeProblem, Trajectory, solve_volterra


@dataclass(eq=False)
class IdentityReport:
    """Outcome of one identity check against a supplied tolerance."""

    name: str
    residual_max: float
    residual_norm: float
    grid_or_zset: str
    passed: bool
    skipped: tuple = ()


@dataclass(eq=False)
class AuxiliaryG:
    """Samples of the auxiliary response function G(t), with G(0) = 1."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError("G samples must cover the grid")
        if self.values[0] != 1.0:
            raise ValueError(f"G(0) must be exactly 1, got {self.values[0]!r}")


def _report(name: str, residual: np.ndarray, description: str, tol: float,
            skipped=()) -> IdentityReport:
    residual = np.asarray(residual)
    rmax = float(np.max(np.abs(residual))) if residual.size else 0.0
    rnorm = float(np.sqrt(np.mean(np.abs(residual) ** 2))) if residual.size else 0.0
    return IdentityReport(name=name, residual_max=rmax, residual_norm=rnorm,
                          grid_or_zset=description, passed=rmax <= tol,
                          skipped=tuple(skipped))


def discrete_convolution(f: np.ndarray, g: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Trapezoid samples of int_0^t f(tau) g(t - tau) dtau on the grid."""
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    n = grid.n_points
    if f.shape != (n,) or g.shape != (n,):
        raise ValueError(
            f"convolution inputs with shapes {f.shape}, {g.shape} do not match "
            f"the grid ({n} points)")
    full = scipy.signal.fftconvolve(f, g)[:n]
    out = grid.dt * (full - 0.5 * f[0] * g - 0.5 * f * g[0])
    out[0] = 0.0
    return out


def _tls_force_arrays(source, grid: TimeGrid):
    """F00/F11 samples for both projector choices, closed-form or computed."""
    if isinstance(source, TlsModel):
        single = closed_form_tls_forces(source, KernelScheme.PROJECTED_SINGLE, grid)
        pair = closed_form_tls_forces(source, KernelScheme.PROJECTED_PAIR, grid)
        f_small = {m: single.element((0, 0)) for m in (0, 1)}  # F00 = F11 here
        f_pair = {m: pair.element((m, m), (m, m)) for m in (0, 1)}
        return f_small, f_pair
    if isinstance(source, System):
        if source.system_dim != 2:
            raise ValueError("the force convolution identity applies to two-level system parts")
        pops = [(0, 0), (1, 1)]
        spec_small = source.projector_spec([(0, 0)])
        spec_pair = source.population_spec()
        small = f_matrix(source, spec_small, grid, pairs=pops)
        pair = f_matrix(source, spec_pair, grid, pairs=pops)
        f_small = {m: small.element((m, m), (m, m)) for m in (0, 1)}
        f_pair = {m: pair.element((m, m), (m, m)) for m in (0, 1)}
        return f_small, f_pair
    raise TypeError(f"expected a TlsModel or System, got {type(source).__name__}")


def check_f_convolution_identity(source, grid: TimeGrid, tol: float) -> IdentityReport:
    """Force convolution identity between the one- and two-population projectors.

    Checks F_mm(t; small) = F_mm(t; pair) - int_0^t F_11(tau; small)
    F_mm(t - tau; pair) dtau for m = 0, 1, to quadrature accuracy.
    """
    f_small, f_pair = _tls_force_arrays(source, grid)
    residuals = []
    for m in (0, 1):
        conv = discrete_convolution(f_small[1], f_pair[m], grid)
        residuals.append(f_small[m] - f_pair[m] + conv)
    desc = f"grid dt={grid.dt:g}, t_max={grid.t_max:g}"
    return _report("f_convolution", np.array(residuals), desc, tol)


def check_kernel_relation_via_G(K_pair: KernelSamples, K_single: KernelSamples,
                                grid: TimeGrid, tol: float):
    """Kernel relation mediated by the auxiliary function G.

    Solves dG/dt = -int_0^t K11(t - tau) G(tau) dtau with G(0) = 1 using the
    same Volterra discretization as the dynamics, then checks
    K00_single(t) = K00_pair(t) + int_0^t K00_pair(t - tau) G'(tau) dtau.
    Returns the recovered G together with the report.
    """
    k11 = K_pair.element((1, 1), (1, 1))
    k00_pair = K_pair.element((0, 0), (0, 0))
    k_single = K_single.element((0, 0), (0, 0))
    k11_block = KernelSamples(grid=grid, index_pairs=((1, 1),),
                              values=k11[np.newaxis, np.newaxis, :], kind=KIND_KERNEL)
    problem = GqmeProblem(grid=grid, kernel=k11_block, drive=None,
                          offset=np.zeros(1), initial=np.array([1.0 + 0.0j]),
                          labels=("G",))
    g_complex = solve_volterra(problem).values[0]
    g_complex[0] = 1.0  # exact by construction; wipe representation noise
    g_prime = -discrete_convolution(k11, g_complex, grid)
    reconstructed = k00_pair + discrete_convolution(k00_pair, g_prime, grid)
    residual = k_single - reconstructed
    desc = f"grid dt={grid.dt:g}, t_max={grid.t_max:g}"
    report = _report("kernel_relation_g", residual, desc, tol)
    aux = AuxiliaryG(grid=grid, values=g_complex.real)
    return aux, report


def _elementary_projector_matrix(n: int) -> np.ndarray:
    P = np.zeros((n, n))
    P[0, 0] = 1.0
    return P


def check_matrix_laplace_identity(system: System, spec_full: ProjectorSpec,
                                  z_set, tol: float,
                                  condition_limit: float = 1e10,
                                  form: str = "standard") -> IdentityReport:
    """Exact Laplace-domain identity between small- and full-projector force matrices.

    Both matrices are evaluated over the full index set; the small one keeps
    only the (0,0) projector inside the resolvent.  ``form`` selects the
    direct statement ("standard"),

        F_small = F_full [1 + F_full - P00 F_full]^{-1},

    or the inverted statement ("inverted"),

        F_full = [1 - F_small + F_small P00]^{-1} F_small.

    Points where the bracket condition number exceeds ``condition_limit``
    are skipped and reported, not failed.
    """
    if form not in ("standard", "inverted"):
        raise ValueError(f"unknown identity form {form!r}")
    pairs = spec_full.index_pairs
    spec_small = ProjectorSpec(spec_full.system_dim, spec_full.bath_dim,
                               ((0, 0),), spec_full.bath_ref)
    P00 = _elementary_projector_matrix(len(pairs))
    eye = np.eye(len(pairs))
    residuals, skipped = [], []
    for z in z_set:
        F_full = laplace_f_matrix(system, spec_full, z)
        F_small = laplace_f_matrix(system, spec_small, z, pairs=pairs)
        if form == "standard":
            bracket = eye + F_full - P00 @ F_full
            target, producer = F_small, F_full
        else:
            bracket = eye - F_small + F_small @ P00
            target, producer = F_full, F_small
        cond = np.linalg.cond(bracket)
        if not np.isfinite(cond) or cond > condition_limit:
            skipped.append(z)
            continue
        if form == "standard":
            predicted = producer @ np.linalg.inv(bracket)
        else:
            predicted = np.linalg.solve(bracket, producer)
        scale = max(float(np.max(np.abs(target))), 1e-30)
        residuals.append(np.abs(predicted - target).max() / scale)
    desc = f"{len(list(z_set))} z points, {len(skipped)} skipped, form={form}"
    return _report("matrix_laplace", np.array(residuals), desc, tol, skipped=skipped)


def laplace_formal_solution(system: System, spec: ProjectorSpec, z: complex,
                            rho0: np.ndarray,
                            condition_limit: float = 1e12) -> np.ndarray:
    """Laplace-domain reduced dynamics (1/z) (1 + F(z; P))^{-1} applied to sigma(0).

    Requires Re z > 0 and an initial state reproduced by the projector.
    """
    if not (np.real(z) > 0):
        raise ValueError(f"Laplace point must satisfy Re z > 0, got z = {z!r}")
    rho0 = assert_density_matrix(rho0)
    _, Q = build_projector_sum(spec)
    leak = float(np.max(np.abs(Q @ vectorize(rho0))))
    if leak > 1e-10:
        raise ValueError(
            f"initial state is not reproduced by the projector (|Q rho0| = {leak:.3e})")
    sigma0 = np.array([
        np.dot(component_vectors(m, n, spec.system_dim, spec.bath_dim, spec.bath_ref)[1],
               vectorize(rho0))
        for (m, n) in spec.index_pairs])
    F = laplace_f_matrix(system, spec, z)
    bracket = np.eye(len(sigma0)) + F
    cond = np.linalg.cond(bracket)
    if not np.isfinite(cond) or cond > condition_limit:
        raise np.linalg.LinAlgError(
            f"formal solution bracket is singular at z = {z!r} (cond {cond:.3e})")
    return np.linalg.solve(bracket, sigma0) / z


def check_formal_solution_agreement(system: System, spec_full: ProjectorSpec,
                                    z_set, rho0: np.ndarray, tol: float,
                                    condition_limit: float = 1e10) -> IdentityReport:
    """Pointwise agreement of the distinguished component of the formal solution.

    The Laplace-domain solution for the (0,0) component must not depend on
    whether the projector keeps only (0,0) or the full index set; this is
    the dynamics-equivalence statement evaluated without any time stepping.
    Residuals are relative; ill-conditioned points are skipped and reported.
    """
    spec_small = ProjectorSpec(spec_full.system_dim, spec_full.bath_dim,
                               ((0, 0),), spec_full.bath_ref)
    residuals, skipped = [], []
    for z in z_set:
        try:
            small = laplace_formal_solution(system, spec_small, z, rho0,
                                            condition_limit=condition_limit)[0]
            full = laplace_formal_solution(system, spec_full, z, rho0,
                                           condition_limit=condition_limit)[0]
        except np.linalg.LinAlgError:
            skipped.append(z)
            continue
        scale = max(abs(small), abs(full), 1e-30)
        residuals.append(abs(small - full) / scale)
    desc = f"{len(list(z_set))} z points, {len(skipped)} skipped"
    return _report("laplace_solution", np.array(residuals), desc, tol, skipped=skipped)


def compare_trajectories(a: Trajectory, b: Trajectory, tol: float) -> IdentityReport:
    """Max and RMS deviation between two trajectories on a common grid and labels."""
    if a.grid != b.grid:
        raise ValueError("trajectories live on different grids")
    if tuple(a.labels) != tuple(b.labels):
        raise ValueError(f"trajectory labels differ: {a.labels} vs {b.labels}")
    residual = a.values - b.values
    desc = f"labels={','.join(a.labels)}, dt={a.grid.dt:g}, t_max={a.grid.t_max:g}"
    return _report("trajectory_compare", residual, desc, tol)
