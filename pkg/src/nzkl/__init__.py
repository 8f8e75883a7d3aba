"""Projection superoperators, exact memory kernels, and master-equation solvers.

The package builds dense projection superoperators for finite closed
quantum systems, samples the exact memory kernels and inhomogeneities they
induce, solves the resulting memory-convolution master equations, and
machine-verifies the identities guaranteeing that structurally different
reductions generate identical dynamics for the shared observable.
"""

from .equivalence import (
    AuxiliaryG,
    IdentityReport,
    check_f_convolution_identity,
    check_formal_solution_agreement,
    check_kernel_relation_via_G,
    check_matrix_laplace_identity,
    compare_trajectories,
    discrete_convolution,
    laplace_formal_solution,
)
from .kernels import (
    KernelSamples,
    KernelScheme,
    TimeGrid,
    closed_form_tls_forces,
    closed_form_tls_kernels,
    default_z_points,
    f_element,
    f_matrix,
    kernel_element,
    kernel_matrix,
    laplace_f_matrix,
    theta_inhomogeneity,
)
from .liouville import (
    TlsModel,
    build_liouvillian,
    devectorize,
    exact_evolve,
    propagator_apply,
    resolvent_apply,
    vectorize,
)
from .projectors import (
    ChargeSet,
    ProjectorSpec,
    RotationFrame,
    System,
    build_component_projector,
    build_population_projector,
    build_projector_sum,
    build_rotation_frame,
    find_conserved_charges,
    orthonormalize_charges,
)
from .solver import (
    GqmeProblem,
    Trajectory,
    build_problem_constraint,
    build_problem_pair_reduced,
    build_problem_rotated,
    build_problem_single,
    rotated_frame_for_system,
    solve_volterra,
)

__version__ = "0.1.0"
