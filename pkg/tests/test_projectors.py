import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nzkl.liouville import build_liouvillian, exact_evolve, vectorize
from nzkl.projectors import (
    ProjectorSpec,
    System,
    build_component_projector,
    build_population_projector,
    build_projector_sum,
    build_rotation_frame,
    find_conserved_charges,
    orthonormalize_charges,
)

from helpers import TLS_DELTA, TLS_EPSILON, random_density, random_hermitian


def _random_spec(seed, system_dim, bath_dim):
    rng = np.random.default_rng(seed)
    all_pairs = [(m, n) for m in range(system_dim) for n in range(system_dim)]
    all_pairs.remove((0, 0))
    k = int(rng.integers(0, len(all_pairs) + 1))
    chosen = [(0, 0)] + [all_pairs[i] for i in rng.choice(len(all_pairs), size=k, replace=False)]
    return ProjectorSpec(system_dim, bath_dim, tuple(chosen), random_density(rng, bath_dim))


class TestPopulationProjector:
    def test_q0_matches_printed_matrix(self):
        P = build_population_projector(0, 2)
        Q = np.eye(4) - P
        np.testing.assert_allclose(Q, np.diag([0.0, 1.0, 1.0, 1.0]), atol=1e-15)

    def test_idempotent_and_rank_one(self):
        rng = np.random.default_rng(0)
        P = build_population_projector(1, 3, random_density(rng, 2))
        np.testing.assert_allclose(P @ P, P, atol=1e-12)
        assert np.linalg.matrix_rank(P, tol=1e-10) == 1

    def test_fixed_point_ket0(self, ket0):
        P = build_population_projector(0, 2)
        v = vectorize(ket0)
        np.testing.assert_allclose(P @ v, v, atol=1e-15)

    def test_extracts_population_coefficient(self):
        rng = np.random.default_rng(4)
        rho = random_density(rng, 2)
        P = build_population_projector(0, 2)
        expected = rho[0, 0] * vectorize(np.array([[1, 0], [0, 0]], dtype=complex))
        np.testing.assert_allclose(P @ vectorize(rho), expected, atol=1e-14)

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValueError, match="out of range"):
            build_population_projector(2, 2)


class TestComponentProjector:
    def test_distinct_components_orthogonal(self):
        P01 = build_component_projector(0, 1, 2)
        P10 = build_component_projector(1, 0, 2)
        np.testing.assert_allclose(P01 @ P10, np.zeros((4, 4)), atol=1e-15)

    def test_diagonal_component_equals_population(self):
        rng = np.random.default_rng(1)
        bath = random_density(rng, 3)
        np.testing.assert_allclose(build_component_projector(0, 0, 2, bath),
                                   build_population_projector(0, 2, bath), atol=1e-15)

    def test_completeness_on_factorized_states(self):
        rng = np.random.default_rng(8)
        for D, DB in [(2, 2), (3, 2)]:
            bath = random_density(rng, DB)
            rho = np.kron(random_density(rng, D), bath)
            total = sum(build_component_projector(m, n, D, bath) @ vectorize(rho)
                        for m in range(D) for n in range(D))
            np.testing.assert_allclose(total, vectorize(rho), atol=1e-12)


class TestProjectorSum:
    def test_tls_pair_is_population_diagonal(self):
        spec = ProjectorSpec(2, 1, ((0, 0), (1, 1)), None)
        P, Q = build_projector_sum(spec)
        np.testing.assert_allclose(P, np.diag([1.0, 0.0, 0.0, 1.0]), atol=1e-15)
        np.testing.assert_allclose(Q, np.diag([0.0, 1.0, 1.0, 0.0]), atol=1e-15)

    def test_complete_index_set_is_identity(self):
        pairs = tuple((m, n) for m in range(2) for n in range(2))
        P, Q = build_projector_sum(ProjectorSpec(2, 1, pairs, None))
        np.testing.assert_allclose(P, np.eye(4), atol=1e-12)
        np.testing.assert_allclose(Q, np.zeros((4, 4)), atol=1e-12)

    def test_singleton_matches_population_matrices(self):
        P, Q = build_projector_sum(ProjectorSpec(2, 1, ((0, 0),), None))
        np.testing.assert_allclose(P, np.diag([1.0, 0.0, 0.0, 0.0]), atol=1e-15)
        np.testing.assert_allclose(Q, np.diag([0.0, 1.0, 1.0, 1.0]), atol=1e-15)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            ProjectorSpec(2, 1, ((0, 0), (0, 0)), None)

    def test_rejects_missing_distinguished_pair(self):
        with pytest.raises(ValueError, match=r"\(0, 0\)"):
            ProjectorSpec(2, 1, ((1, 1),), None)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**30))
    def test_projector_algebra_random_specs(self, D, DB, seed):
        spec = _random_spec(seed, D, DB)
        P, Q = build_projector_sum(spec)
        eye = np.eye(spec.dim ** 2)
        assert np.max(np.abs(P @ P - P)) <= 1e-12
        assert np.max(np.abs(Q @ Q - Q)) <= 1e-12
        assert np.max(np.abs(P @ Q)) <= 1e-12
        assert np.max(np.abs(Q @ P)) <= 1e-12
        assert np.max(np.abs(P + Q - eye)) <= 1e-12

    @settings(max_examples=15, deadline=None)
    @given(st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**30))
    def test_component_orthogonality_random(self, D, DB, seed):
        rng = np.random.default_rng(seed)
        bath = random_density(rng, DB)
        pairs = [(m, n) for m in range(D) for n in range(D)]
        idx = rng.choice(len(pairs), size=2, replace=False)
        (m1, n1), (m2, n2) = pairs[idx[0]], pairs[idx[1]]
        A = build_component_projector(m1, n1, D, bath)
        B = build_component_projector(m2, n2, D, bath)
        assert np.max(np.abs(A @ B)) <= 1e-12


class TestConservedCharges:
    def test_tls_charge_proportional_to_hamiltonian(self, tls_system):
        charges = find_conserved_charges(tls_system.hamiltonian, max_count=5)
        assert len(charges) == 1
        C = charges[0]
        H = tls_system.hamiltonian
        overlap = abs(np.trace(C.conj().T @ H)) / np.sqrt(
            np.trace(C @ C).real * np.trace(H @ H).real)
        assert abs(overlap - 1.0) < 1e-10

    def test_charge_postconditions(self):
        rng = np.random.default_rng(17)
        H = random_hermitian(rng, 4)
        for C in find_conserved_charges(H, max_count=10):
            assert np.max(np.abs(H @ C - C @ H)) <= 1e-10
            assert abs(np.trace(C)) <= 1e-12
            assert np.max(np.abs(C - C.conj().T)) <= 1e-12

    def test_diagonal_hamiltonian_counts(self):
        H = np.diag([0.1, 0.7, -0.4, 1.3]).astype(complex)
        charges = find_conserved_charges(H, max_count=10)
        assert len(charges) == 3
        for C in charges:
            assert np.max(np.abs(C - np.diag(np.diag(C)))) < 1e-10

    def test_identity_hamiltonian_full_space(self):
        H = 2.0 * np.eye(3, dtype=complex)
        assert len(find_conserved_charges(H, max_count=20)) == 8
        assert len(find_conserved_charges(H, max_count=5)) == 5

    def test_conserved_along_exact_dynamics(self):
        rng = np.random.default_rng(23)
        H = random_hermitian(rng, 3)
        rho0 = random_density(rng, 3)
        charges = find_conserved_charges(H, max_count=5)
        assert charges
        for t in np.linspace(0.0, 10.0, 11):
            rho_t = exact_evolve(H, rho0, t)
            for C in charges:
                v0 = np.trace(C @ rho0).real
                assert abs(np.trace(C @ rho_t).real - v0) < 1e-9


class TestOrthonormalizeCharges:
    def test_tls_energy_charge(self, tls_system, ket0):
        raw = find_conserved_charges(tls_system.hamiltonian, max_count=5)
        cs = orthonormalize_charges(raw, ket0)
        assert cs.count == 2
        np.testing.assert_allclose(cs.operators[0], np.eye(2) / np.sqrt(2), atol=1e-14)
        H = tls_system.hamiltonian
        hs_norm = np.sqrt(np.trace(H @ H).real)
        sign = np.sign(np.trace(cs.operators[1] @ H).real)
        np.testing.assert_allclose(sign * cs.operators[1], H / hs_norm, atol=1e-10)
        # q2 = Tr{C2 ket0} carries the conserved energy -epsilon / ||H||
        assert abs(sign * cs.values[1] - (-TLS_EPSILON / hs_norm)) < 1e-10

    def test_empty_raw_gives_identity_only(self, ket0):
        cs = orthonormalize_charges([], ket0)
        assert cs.count == 1
        assert abs(cs.values[0] - 1 / np.sqrt(2)) < 1e-14

    def test_identity_in_raw_rejected(self, ket0):
        with pytest.raises(ValueError, match="dependent"):
            orthonormalize_charges([np.eye(2, dtype=complex)], ket0)

    def test_orthonormality_and_tracelessness(self):
        rng = np.random.default_rng(31)
        raw = [random_hermitian(rng, 3) for _ in range(3)]
        cs = orthonormalize_charges(raw, random_density(rng, 3))
        for i, Ci in enumerate(cs.operators):
            if i >= 1:
                assert abs(np.trace(Ci)) <= 1e-12
            for j, Cj in enumerate(cs.operators):
                overlap = np.trace(Ci.conj().T @ Cj).real
                assert abs(overlap - (1.0 if i == j else 0.0)) <= 1e-10


class TestRotationFrame:
    def _tls_frame(self, tls_system, ket0):
        raw = find_conserved_charges(tls_system.hamiltonian, max_count=5)
        charges = orthonormalize_charges(raw, ket0)
        L = build_liouvillian(tls_system.hamiltonian)
        return build_rotation_frame(charges, tls_system.population_observable(0), L)

    def test_rotation_is_unitary(self, tls_system, ket0):
        frame = self._tls_frame(tls_system, ket0)
        R = frame.rotation
        assert np.max(np.abs(R @ R.conj().T - np.eye(4))) <= 1e-10

    def test_normalization_value(self, tls_system, ket0):
        # N = delta / (sqrt(2) * Omega) for the energy-charge frame
        frame = self._tls_frame(tls_system, ket0)
        assert abs(frame.normalization - TLS_DELTA / np.sqrt(2.0)) < 1e-12

    def test_first_coordinate_formula_on_random_states(self, tls_system, ket0):
        frame = self._tls_frame(tls_system, ket0)
        rng = np.random.default_rng(41)
        obs = tls_system.population_observable(0)
        for _ in range(10):
            rho = random_density(rng, 2)
            y = frame.rotation @ vectorize(rho)
            sigma0 = np.trace(obs @ rho).real
            qs = [np.trace(C @ rho).real for C in frame.charges.operators]
            expected = (sigma0 - np.dot(qs, frame.charge_overlaps)) / frame.normalization
            assert abs(y[0] - expected) < 1e-10

    def test_rotated_liouvillian_preserves_spectrum(self, tls_system, ket0):
        frame = self._tls_frame(tls_system, ket0)
        L = build_liouvillian(tls_system.hamiltonian)
        a = np.sort(np.linalg.eigvalsh(L))
        b = np.sort(np.linalg.eigvalsh(frame.rotated_liouvillian))
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_charge_coordinates_constant_in_time(self, tls_system):
        rng = np.random.default_rng(43)
        rho0 = random_density(rng, 2)
        raw = find_conserved_charges(tls_system.hamiltonian, max_count=5)
        charges = orthonormalize_charges(raw, rho0)
        L = build_liouvillian(tls_system.hamiltonian)
        frame = build_rotation_frame(charges, tls_system.population_observable(0), L)
        y0 = frame.rotation @ vectorize(rho0)
        for t in np.linspace(0.0, 10.0, 11):
            y_t = frame.rotation @ vectorize(exact_evolve(tls_system.hamiltonian, rho0, t))
            np.testing.assert_allclose(y_t[1:3], y0[1:3], atol=1e-9)

    def test_orthogonal_observable_trivial_frame(self, ket0):
        charges = orthonormalize_charges([], ket0)
        observable = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)  # orthogonal to I
        L = build_liouvillian(np.zeros((2, 2)))
        frame = build_rotation_frame(charges, observable, L)
        assert abs(frame.normalization - np.sqrt(2.0)) < 1e-12
        np.testing.assert_allclose(frame.distinguished, observable / np.sqrt(2.0),
                                   atol=1e-12)

    def test_observable_in_charge_span_rejected(self, tls_system, ket0):
        raw = find_conserved_charges(tls_system.hamiltonian, max_count=5)
        charges = orthonormalize_charges(raw, ket0)
        L = build_liouvillian(tls_system.hamiltonian)
        with pytest.raises(ValueError, match="linear combination"):
            build_rotation_frame(charges, charges.operators[1], L)

    def test_completed_basis_size(self, tls_system, ket0):
        frame = self._tls_frame(tls_system, ket0)
        # d^2 = 4 coordinates: observable + 2 charges + 1 residual
        assert len(frame.completed_basis) == 1
