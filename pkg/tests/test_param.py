import numpy as np
import pytest

from ssesim.algebra import pauli, random_state
from ssesim.errors import DimensionError, InfeasibleError, ValidationError
from ssesim.param import (
    correlation_from_noise,
    map_noise_increments,
    noise_from_correlation,
    random_correlation,
    random_isometry,
    random_orthogonal,
    redundancy_witness,
    spectral_norm,
    takagi,
    validate_correlation,
)
from ssesim.sse import NoiseStream

H_TEST = np.array([[0.15, 0.2], [0.2, -0.15]], dtype=complex)
L_TEST = (0.5 * pauli(3), 0.4 * pauli(1))


def test_correlation_of_identity_noise():
    assert np.array_equal(correlation_from_noise(np.eye(3)), np.eye(3).astype(complex))


def test_correlation_of_two_row_column():
    # u = (p, iq)^T has u^T u = p^2 - q^2 = r while |u|^2 = 1.
    for r in (0.0, 0.35, 1.0):
        p = np.sqrt((1.0 + r) / 2.0)
        q = np.sqrt((1.0 - r) / 2.0)
        u = np.array([[p], [1j * q]])
        s = correlation_from_noise(u)
        assert abs(s[0, 0] - r) <= 1e-15


def test_correlation_balanced_column_vanishes():
    u = np.array([[1.0], [1j]]) / np.sqrt(2.0)
    assert abs(correlation_from_noise(u)[0, 0]) <= 1e-16


def test_correlation_rejects_non_isometry():
    with pytest.raises(ValidationError):
        correlation_from_noise(np.array([[0.9], [0.1]]))


def test_map_noise_identity():
    out = map_noise_increments(np.eye(3), np.array([1.0, 0.0, 0.0]))
    assert np.array_equal(out, np.array([1.0, 0.0, 0.0], dtype=complex))


def test_map_noise_zero():
    u = random_isometry(1, 4, 2, 0)
    assert np.array_equal(map_noise_increments(u, np.zeros(4)), np.zeros(2, dtype=complex))


def test_map_noise_rejects_length_mismatch():
    with pytest.raises(DimensionError):
        map_noise_increments(np.eye(3), np.zeros(2))


def test_map_noise_second_moments():
    # E[dxi dxi^T] / dt -> conj(s) and E[conj(dxi) dxi^T] / dt -> I.
    dt = 1e-3
    u = random_isometry(4, 3, 2, 0)
    dw = NoiseStream(31, 0).wiener_block(100000, 3, dt)
    xi = map_noise_increments(u, dw)
    emp = np.einsum("bi,bj->ij", xi, xi) / (100000 * dt)
    cross = np.einsum("bi,bj->ij", xi.conj(), xi) / (100000 * dt)
    assert np.max(np.abs(emp - np.conj(correlation_from_noise(u)))) <= 0.05
    assert np.max(np.abs(cross - np.eye(2))) <= 0.05


def test_takagi_reconstruction_sweep():
    for n in (1, 2, 3, 4):
        for case in range(25):
            s = random_correlation(8, n, case)
            sigma, w = takagi(s)
            assert np.all(sigma >= 0.0)
            assert np.all(np.diff(sigma) <= 1e-12)
            assert np.max(np.abs(w @ np.diag(sigma) @ w.T - s)) <= 1e-10
            assert np.max(np.abs(w.conj().T @ w - np.eye(n))) <= 1e-10


def test_takagi_handles_degenerate_spectra():
    v = random_isometry(2, 3, 3, 0)
    for sigma in ([0.7, 0.7, 0.7], [0.9, 0.9, 0.0], [0.0, 0.0, 0.0]):
        s = v @ np.diag(sigma) @ v.T
        sig, w = takagi(s)
        assert np.max(np.abs(w @ np.diag(sig) @ w.T - s)) <= 1e-10


def test_noise_from_identity_correlation():
    u = noise_from_correlation(np.eye(2))
    assert u.shape == (4, 2)
    assert np.max(np.abs(u.conj().T @ u - np.eye(2))) <= 1e-12
    assert np.max(np.abs(correlation_from_noise(u) - np.eye(2))) <= 1e-12


def test_noise_from_zero_correlation():
    u = noise_from_correlation(np.zeros((3, 3)))
    assert np.max(np.abs(np.abs(u[:3, :]) - np.eye(3) / np.sqrt(2.0))) <= 1e-12
    assert np.max(np.abs(correlation_from_noise(u))) <= 1e-12


def test_round_trip_sweep():
    for n in (1, 2, 3, 4):
        for case in range(50):
            s = random_correlation(3, n, case)
            u = noise_from_correlation(s)
            assert u.shape == (2 * n, n)
            assert np.max(np.abs(correlation_from_noise(u) - s)) <= 1e-10
            assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-10


def test_feasibility_boundary():
    noise_from_correlation(np.eye(2))  # spectral norm exactly 1 is feasible
    with pytest.raises(InfeasibleError):
        noise_from_correlation((1.0 + 1e-6) * np.eye(2))


def test_noise_from_correlation_rejects_asymmetric_input():
    with pytest.raises(ValidationError):
        noise_from_correlation(np.array([[0.1, 0.5], [0.2, 0.1]]))


def test_validate_correlation_identity():
    check = validate_correlation(np.eye(3))
    assert check.symmetric and check.feasible
    assert abs(check.spectral_norm - 1.0) <= 1e-12


def test_validate_correlation_infeasible():
    check = validate_correlation(2.0 * np.eye(2))
    assert check.symmetric and not check.feasible
    assert abs(check.spectral_norm - 2.0) <= 1e-12


def test_validate_correlation_off_diagonal():
    check = validate_correlation(np.array([[0.0, 0.5], [0.5, 0.0]]))
    assert check.feasible
    assert abs(check.spectral_norm - 0.5) <= 1e-12


def test_validate_correlation_rejects_non_square():
    with pytest.raises(DimensionError):
        validate_correlation(np.zeros((2, 3)))


def test_spectral_norm_matches_numpy():
    for n in (2, 3, 4):
        for case in range(10):
            s = random_correlation(6, n, case, target_norm=0.8)
            assert abs(spectral_norm(s) - np.linalg.svd(s, compute_uv=False)[0]) <= 1e-12


def test_witness_identity_rotation_is_exact():
    u = random_isometry(9, 4, 2, 1)
    w = redundancy_witness(
        u, np.eye(4), H_TEST, L_TEST, random_state(9, 2, 1), 0.05, 1e-3, seed=9
    )
    assert w.s_equal
    assert w.s_deviation == 0.0
    assert w.max_pathwise_deviation == 0.0


def test_witness_plane_rotation():
    angle = np.pi / 4.0
    orth = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    u = np.array([[1.0], [0.0]], dtype=complex)
    w = redundancy_witness(
        u, orth, H_TEST, L_TEST[:1], random_state(2, 2, 0), 0.1, 1e-3, seed=4
    )
    assert w.s_equal
    assert w.max_pathwise_deviation <= 1e-12


def test_witness_random_sweep():
    for case in range(20):
        n = 1 + case % 2
        u = random_isometry(5, 4, n, case)
        orth = random_orthogonal(5, 4, case)
        w = redundancy_witness(
            u, orth, H_TEST, L_TEST[:n], random_state(5, 2, case), 0.1, 1e-3,
            seed=5, trajectory_id=case,
        )
        assert w.s_deviation <= 1e-12
        assert w.max_pathwise_deviation <= 1e-12


def test_witness_rejects_non_orthogonal_matrix():
    u = random_isometry(9, 3, 1, 0)
    with pytest.raises(ValidationError):
        redundancy_witness(
            u, 0.5 * np.eye(3), H_TEST, L_TEST[:1], random_state(9, 2, 0), 0.05, 1e-3, seed=1
        )


def test_random_helpers_are_deterministic():
    assert np.array_equal(random_isometry(1, 4, 2, 3), random_isometry(1, 4, 2, 3))
    assert np.array_equal(random_orthogonal(1, 4, 3), random_orthogonal(1, 4, 3))
    assert np.array_equal(random_correlation(1, 3, 3), random_correlation(1, 3, 3))
    orth = random_orthogonal(1, 5, 0)
    assert np.max(np.abs(orth.T @ orth - np.eye(5))) <= 1e-12
