import numpy as np
import pytest

from ssesim.algebra import bloch_from_state, pauli, random_state
from ssesim.errors import DimensionError, StepSizeError, ValidationError
from ssesim.master import MasterGenerator, analytic_pauli_solution, integrate_master
from ssesim.sse import (
    GeneralDiffusiveModel,
    NoiseStream,
    NonCpQubitModel,
    apply_phase_gauge,
    ensemble_density,
    general_increment,
    identity_residual,
    noncp_increment,
    pairwise_sum,
    perp_state,
    simulate_trajectory,
    simulate_with_noise,
    step,
)

POLE = np.array([1.0, 0.0], dtype=complex)
PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)


def _projectors(states):
    return np.einsum("...i,...j->...ij", states, states.conj())


# ---------------------------------------------------------------- noise


def test_wiener_moments():
    dw = NoiseStream(77, 5).wiener_block(100000, 1, 1e-3)[:, 0]
    assert abs(dw.mean()) <= 4.0 * np.sqrt(1e-3 / 100000.0)
    assert abs(dw.var() - 1e-3) <= 0.05 * 1e-3


def test_wiener_is_counter_based():
    stream = NoiseStream(5, 9)
    block = stream.wiener_block(20, 3, 1e-3)
    per_step = np.array([stream.wiener(s, 3, 1e-3) for s in range(20)])
    assert np.array_equal(block, per_step)
    # draws depend only on the coordinates, not on previous calls
    assert np.array_equal(stream.wiener(7, 3, 1e-3), block[7])


def test_wiener_streams_differ_across_trajectories():
    a = NoiseStream(5, 0).wiener_block(10, 1, 1e-3)
    b = NoiseStream(5, 1).wiener_block(10, 1, 1e-3)
    assert np.min(np.abs(a - b)) > 0.0


# ---------------------------------------------------------------- perp state


def test_perp_at_pole_uses_fallback():
    assert np.array_equal(perp_state(POLE), np.array([0.0, 1.0], dtype=complex))


def test_perp_on_equator():
    perp = perp_state(PLUS)
    assert abs(np.vdot(PLUS, perp)) <= 1e-15
    assert np.allclose(bloch_from_state(perp), [-1.0, 0.0, 0.0], atol=1e-14)


def test_perp_sweep_norm_and_orthogonality():
    psi = random_state(21, 2, np.arange(1000))
    perp = perp_state(psi)
    norms = np.einsum("bi,bi->b", perp.conj(), perp).real
    overlaps = np.abs(np.einsum("bi,bi->b", psi.conj(), perp))
    assert np.max(np.abs(norms - 1.0)) <= 1e-12
    assert np.max(overlaps) <= 1e-12


def test_perp_rejects_wrong_dimension():
    with pytest.raises(DimensionError):
        perp_state(np.ones(3, dtype=complex) / np.sqrt(3.0))


# ---------------------------------------------------------------- increments


def test_noncp_increment_plus_state_is_stationary():
    prop = noncp_increment(PLUS, NonCpQubitModel(), dw=0.37, dt=1e-3)
    assert np.max(np.abs(prop - PLUS)) <= 1e-15


def test_noncp_increment_at_pole():
    dt, dw = 1e-3, 0.02
    prop = noncp_increment(POLE, NonCpQubitModel(), dw=dw, dt=dt)
    expected = POLE * (1.0 - dt) + np.sqrt(2.0) * dw * np.array([0.0, 1.0])
    assert np.max(np.abs(prop - expected)) <= 1e-15


def test_noncp_increment_continuity():
    psi = random_state(4, 2, 0)
    for dt in (1e-2, 1e-4, 1e-6):
        prop = noncp_increment(psi, NonCpQubitModel(), dw=0.0, dt=dt)
        assert np.max(np.abs(prop - psi)) <= 4.0 * dt


def test_ito_norm_balance():
    # Antithetic +-sqrt(dt) average of ||psi + dpsi||^2 - 1 cancels the noise
    # term exactly; for rates (1, 1, -1) the remaining drift balance is zero,
    # leaving only the O(dt^2) drift-squared term.
    dt = 1e-3
    model = NonCpQubitModel()
    psi = random_state(21, 2, np.arange(1000))
    root = np.full(1000, np.sqrt(dt))
    plus = noncp_increment(psi, model, root, dt)
    minus = noncp_increment(psi, model, -root, dt)
    norm_plus = np.einsum("bi,bi->b", plus.conj(), plus).real
    norm_minus = np.einsum("bi,bi->b", minus.conj(), minus).real
    residual = np.abs((norm_plus + norm_minus) / 2.0 - 1.0)
    assert np.max(residual) <= 5.0 * dt * dt


def test_general_increment_eigenstate_is_stationary():
    model = GeneralDiffusiveModel(np.zeros((2, 2)), (np.sqrt(0.7) * pauli(3),), np.eye(1))
    prop = general_increment(POLE, model, np.array([0.4]), 1e-3)
    assert np.max(np.abs(prop - POLE)) <= 1e-15


def test_general_increment_closed_system_limit():
    zero_op = np.zeros((2, 2), dtype=complex)
    model = GeneralDiffusiveModel(pauli(3), (zero_op,), np.eye(1))
    psi = random_state(11, 2, 0)
    dt = 1e-3
    prop = general_increment(psi, model, np.array([0.0]), dt)
    expected = psi - 1j * (pauli(3) @ psi) * dt
    assert np.max(np.abs(prop - expected)) <= 1e-16


def test_general_increment_matches_naive_loop():
    rng = np.random.default_rng(0)
    h = np.array([[0.4, 0.1 + 0.2j], [0.1 - 0.2j, -0.3]])
    sm = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
    lindblads = (0.8 * sm, 0.5 * pauli(3), 0.3 * pauli(1))
    u = np.linalg.qr(rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3)))[0]
    model = GeneralDiffusiveModel(h, lindblads, u)
    psi = random_state(1, 2, 0)
    dw = rng.normal(size=5) * np.sqrt(1e-3)
    dt = 1e-3

    drift = -1j * (h @ psi)
    for op in lindblads:
        e = np.vdot(psi, op @ psi)
        drift = drift - 0.5 * (
            op.conj().T @ op @ psi - 2.0 * np.conj(e) * (op @ psi) + abs(e) ** 2 * psi
        )
    noise = np.zeros(2, dtype=complex)
    for k in range(5):
        for j, op in enumerate(lindblads):
            e = np.vdot(psi, op @ psi)
            noise = noise + u[k, j] * ((op @ psi) - e * psi) * dw[k]
    expected = psi + drift * dt + noise
    assert np.max(np.abs(general_increment(psi, model, dw, dt) - expected)) <= 1e-15


def test_general_increment_rejects_wrong_noise_length():
    model = GeneralDiffusiveModel(np.zeros((2, 2)), (pauli(1), pauli(2)), np.eye(2))
    with pytest.raises(DimensionError):
        general_increment(PLUS, model, np.zeros(3), 1e-3)


def test_general_model_rejects_non_isometry():
    with pytest.raises(ValidationError):
        GeneralDiffusiveModel(np.zeros((2, 2)), (pauli(1),), np.array([[0.5]]))


def test_general_model_rejects_wide_noise_matrix():
    with pytest.raises(ValidationError):
        GeneralDiffusiveModel(np.zeros((2, 2)), (pauli(1), pauli(2)), np.eye(2)[:1])


# ---------------------------------------------------------------- stepping


def test_step_is_identity_without_time_and_noise():
    psi = random_state(2, 2, 5)
    assert np.array_equal(step(psi, NonCpQubitModel(), np.zeros(1), 0.0), psi)


def test_step_at_pole_without_noise():
    out = step(POLE, NonCpQubitModel(), np.zeros(1), 1e-3)
    assert np.max(np.abs(out - POLE)) <= 1e-15


def test_step_output_is_normalized():
    psi = random_state(6, 2, np.arange(100))
    dw = NoiseStream(6, 0).wiener(0, 1, 1e-3) * np.ones((100, 1))
    out = step(psi, NonCpQubitModel(), dw, 1e-3)
    norms = np.einsum("bi,bi->b", out.conj(), out).real
    assert np.max(np.abs(norms - 1.0)) <= 1e-15


def test_step_failure_on_collapsed_norm():
    with pytest.raises(StepSizeError):
        step(POLE, NonCpQubitModel(), np.zeros(1), 0.99)


def test_trajectory_zero_time():
    traj = simulate_trajectory(NonCpQubitModel(), POLE, 0.0, 1e-3, seed=1)
    assert traj.states.shape == (1, 2)
    assert np.array_equal(traj.states[0], POLE)


def test_trajectory_determinism():
    a = simulate_trajectory(NonCpQubitModel(), POLE, 0.1, 1e-3, seed=5, trajectory_id=3)
    b = simulate_trajectory(NonCpQubitModel(), POLE, 0.1, 1e-3, seed=5, trajectory_id=3)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.norm_drift, b.norm_drift)


def test_trajectory_states_stay_normalized():
    traj = simulate_trajectory(NonCpQubitModel(), PLUS, 0.2, 1e-3, seed=9)
    norms = np.einsum("si,si->s", traj.states.conj(), traj.states).real
    assert np.max(np.abs(norms - 1.0)) <= 1e-12


def test_trajectory_norm_drift_time_average():
    dt = 1e-3
    traj = simulate_trajectory(NonCpQubitModel(), POLE, 1.0, dt, seed=13)
    assert abs(np.mean(traj.norm_drift)) <= 5.0 * dt


def test_trajectory_step_failure_reports_index():
    with pytest.raises(StepSizeError, match="step 0"):
        simulate_with_noise(NonCpQubitModel(), POLE, 0.99, np.zeros((1, 1)))


def test_trajectory_rejects_non_multiple_horizon():
    with pytest.raises(ValidationError):
        simulate_trajectory(NonCpQubitModel(), POLE, 0.25, 1e-3 * 1.0001, seed=0)


def test_plus_state_is_a_fixed_point_of_the_unraveling():
    traj = simulate_trajectory(NonCpQubitModel(), PLUS, 0.5, 1e-3, seed=17)
    proj = _projectors(traj.states)
    assert np.max(np.abs(proj - _projectors(PLUS))) <= 1e-12


# ---------------------------------------------------------------- gauge


def test_gauge_zero_phase_is_identity():
    psi = random_state(3, 2, 1)
    assert np.array_equal(apply_phase_gauge(psi, 0.0), psi)


def test_gauge_leaves_projector_invariant():
    psi = random_state(3, 2, np.arange(50))
    gauged = apply_phase_gauge(psi, 1.234)
    assert np.max(np.abs(_projectors(gauged) - _projectors(psi))) <= 1e-15


def test_gauged_trajectory_has_identical_projector_path():
    psi0 = np.array([0.6, 0.8j], dtype=complex)

    def gauge(psi, dw, dt):
        return 0.37 + 2.1 * float(dw[0]) + float(psi[0].real)

    plain = simulate_trajectory(NonCpQubitModel(), psi0, 0.25, 1e-3, seed=7, trajectory_id=2)
    gauged = simulate_trajectory(
        NonCpQubitModel(), psi0, 0.25, 1e-3, seed=7, trajectory_id=2, gauge=gauge
    )
    frob = np.sqrt(np.sum(np.abs(_projectors(plain.states) - _projectors(gauged.states)) ** 2, axis=(1, 2)))
    assert np.max(frob) <= 1e-13


# ---------------------------------------------------------------- reduction


def test_pairwise_sum_matches_exact_sum():
    rng = np.random.default_rng(2)
    values = rng.normal(size=(1001, 3))
    assert np.allclose(pairwise_sum(values, axis=0), values.sum(axis=0), atol=1e-12)


def test_pairwise_sum_is_blocking_invariant():
    rng = np.random.default_rng(3)
    values = rng.normal(size=137)
    whole = pairwise_sum(values)
    for block in (4, 8, 32, 64):
        parts = [pairwise_sum(values[lo : lo + block]) for lo in range(0, 137, block)]
        assert pairwise_sum(np.array(parts)) == whole


# ---------------------------------------------------------------- ensembles


def test_single_trajectory_ensemble_is_pure():
    est = ensemble_density(NonCpQubitModel(), POLE, 0.1, 1e-3, 1, seed=5, grid_points=100)
    traj = simulate_trajectory(NonCpQubitModel(), POLE, 0.1, 1e-3, seed=5, trajectory_id=0)
    idx = np.round(est.times / 1e-3).astype(int)
    assert np.array_equal(est.mean_density, _projectors(traj.states[idx]))
    assert np.all(np.isinf(est.standard_error))


def test_ensemble_thread_count_does_not_change_bytes():
    args = (NonCpQubitModel(), POLE, 0.05, 1e-3, 600, 42)
    serial = ensemble_density(*args, threads=1)
    threaded = ensemble_density(*args, threads=4)
    assert serial.mean_density.tobytes() == threaded.mean_density.tobytes()
    assert serial.standard_error.tobytes() == threaded.standard_error.tobytes()


def test_ensemble_mean_density_is_physical():
    est = ensemble_density(NonCpQubitModel(), POLE, 0.1, 1e-3, 500, seed=2)
    traces = np.einsum("gii->g", est.mean_density).real
    herm = np.max(np.abs(est.mean_density - est.mean_density.conj().swapaxes(1, 2)))
    assert np.max(np.abs(traces - 1.0)) <= 1e-10
    assert herm <= 1e-10


def test_ensemble_tracks_master_equation():
    est = ensemble_density(NonCpQubitModel(), POLE, 0.1, 1e-3, 4000, seed=31)
    reference = analytic_pauli_solution(np.array([0.0, 0.0, 1.0]), (1, 1, -1), est.times)
    deviation = np.abs(est.bloch() - reference)
    assert np.all(deviation <= 3.0 * est.standard_error + 2.0 * 1e-3)


def test_ensemble_conserves_plus_state_mean():
    est = ensemble_density(NonCpQubitModel(), PLUS, 0.2, 1e-3, 200, seed=8)
    assert np.max(np.abs(est.bloch()[:, 0] - 1.0)) <= 1e-10


def test_general_ensemble_matches_lindblad_integration():
    sm = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
    h = 0.7 * pauli(3) + 0.3 * pauli(1)
    lindblads = (0.8 * sm, 0.5 * pauli(3))
    u = np.array([[0.6, 0.0], [0.8, 0.0], [0.0, 1.0]], dtype=complex)
    model = GeneralDiffusiveModel(h, lindblads, u)
    est = ensemble_density(model, POLE, 0.2, 1e-3, 8000, seed=9, threads=2)

    gen = MasterGenerator(h, tuple((1.0, op) for op in lindblads))
    rho = np.outer(POLE, POLE.conj())
    prev = 0.0
    reference = []
    for t in est.times:
        rho = integrate_master(rho, gen, t - prev, 1e-3)
        reference.append([2 * rho[1, 0].real, 2 * rho[1, 0].imag, (rho[0, 0] - rho[1, 1]).real])
        prev = t
    deviation = np.abs(est.bloch() - np.asarray(reference))
    assert np.all(deviation <= 3.0 * est.standard_error + 2.0 * 1e-3)


def test_perp_phase_choice_does_not_move_the_final_mean():
    # A fixed phase on psi_perp reroutes individual paths but not the ensemble
    # law; at finite dt the two runs differ by independent discretization bias,
    # so the comparison carries the usual 2 dt allowance.
    dt = 1e-3
    plain = ensemble_density(NonCpQubitModel(), POLE, 0.25, dt, 20000, seed=42, threads=2)
    rotated = ensemble_density(
        NonCpQubitModel(perp_phase=0.9), POLE, 0.25, dt, 20000, seed=42, threads=2
    )
    diff = np.abs(plain.bloch()[-1] - rotated.bloch()[-1])
    bound = 3.0 * np.sqrt(2.0) * plain.standard_error[-1] + 2.0 * dt
    assert np.all(diff <= bound)


def test_ensemble_rejects_zero_trajectories():
    with pytest.raises(ValidationError):
        ensemble_density(NonCpQubitModel(), POLE, 0.1, 1e-3, 0, seed=1)


# ---------------------------------------------------------------- identity


def test_identity_residual_at_pole():
    assert identity_residual(POLE, (1, 1, -1)) <= 1e-12


def test_identity_residual_on_equator():
    # n_z = 0 kills the left side and the right side cancels entrywise.
    assert identity_residual(PLUS, (1, 1, -1)) <= 1e-15


def test_identity_residual_haar_sweep():
    psi = random_state(7, 2, np.arange(1000))
    residuals = identity_residual(psi, (1, 1, -1))
    assert np.max(residuals) <= 1e-12


def test_identity_fails_for_other_rate_patterns():
    psi = np.array([0.8, 0.6], dtype=complex)
    assert identity_residual(psi, (1.0, 1.0, 1.0)) > 1e-3
