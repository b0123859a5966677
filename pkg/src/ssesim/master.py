"""Deterministic master-equation engine.

Signed-rate Lindblad generators, classical RK4 integration, the closed-form
Bloch solution for Pauli-channel generators, dynamical-map extraction by
basis tomography, Choi matrices, and complete-positivity / positivity
diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    hermitian_eigen,
    max_abs,
    pauli,
    random_state,
    require_hermitian,
)
from .errors import DimensionError, ValidationError


def _trace(m) -> np.ndarray:
    return np.einsum("...ii->...", m)


def _dagger(m) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def _symmetrize(m) -> np.ndarray:
    return (m + _dagger(m)) / 2.0


def _num_steps(t: float, dt: float) -> int:
    # ceil(t / dt) with a guard against float ratios sitting a few ulps
    # above an integer.
    return max(1, int(math.ceil(t / dt - 1e-9)))


@dataclass
class MasterGenerator:
    """Generator -i[H, rho] + sum_k c_k (A_k rho A_k^dag - {A_k^dag A_k, rho}/2).

    `channels` is a sequence of (rate, operator) pairs; rates may be negative.
    """

    hamiltonian: np.ndarray
    channels: tuple = ()

    def __post_init__(self):
        self.hamiltonian = require_hermitian(self.hamiltonian, tol=1e-12, what="Hamiltonian")
        d = self.hamiltonian.shape[0]
        rates, ops = [], []
        for rate, op in self.channels:
            op = np.asarray(op, dtype=complex)
            if op.shape != (d, d):
                raise DimensionError(f"channel operator shape {op.shape} does not match d = {d}")
            rates.append(float(rate))
            ops.append(op)
        self.channels = tuple(zip(rates, ops))
        self._rates = np.array(rates, dtype=float)
        self._ops = np.array(ops, dtype=complex).reshape(len(ops), d, d)
        self._ops_dag = _dagger(self._ops)
        self._gram = self._ops_dag @ self._ops  # A_k^dag A_k

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def pauli_generator(rates) -> MasterGenerator:
    """Qubit generator with H = 0 and channels (c_k, sigma_k), k = 1..3."""
    c = np.asarray(rates, dtype=float)
    if c.shape != (3,):
        raise DimensionError(f"rate vector must have shape (3,), got {c.shape}")
    return MasterGenerator(np.zeros((2, 2)), tuple((c[k], pauli(k + 1)) for k in range(3)))


def lindblad_rhs(rho, gen: MasterGenerator) -> np.ndarray:
    """Right-hand side of the master equation; broadcasts over leading axes."""
    rho = np.asarray(rho, dtype=complex)
    d = gen.dim
    if rho.shape[-2:] != (d, d):
        raise DimensionError(f"state shape {rho.shape} does not match generator dimension {d}")
    h = gen.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for k in range(len(gen._rates)):
        a, adag, gram = gen._ops[k], gen._ops_dag[k], gen._gram[k]
        out = out + gen._rates[k] * (a @ rho @ adag - 0.5 * (gram @ rho + rho @ gram))
    return out


def _integrate_stack(mats, gen: MasterGenerator, t: float, dt: float) -> np.ndarray:
    """RK4 over ceil(t/dt) uniform steps, re-Hermitizing after each step."""
    if t < 0:
        raise ValidationError(f"final time must be >= 0, got {t}")
    mats = np.asarray(mats, dtype=complex)
    if t == 0:
        return mats.copy()
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    n = _num_steps(t, dt)
    h = t / n
    m = mats.copy()
    for _ in range(n):
        k1 = lindblad_rhs(m, gen)
        k2 = lindblad_rhs(m + 0.5 * h * k1, gen)
        k3 = lindblad_rhs(m + 0.5 * h * k2, gen)
        k4 = lindblad_rhs(m + h * k3, gen)
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        m = _symmetrize(m)
    return m


def require_density(rho, what: str = "density matrix") -> np.ndarray:
    rho = require_hermitian(np.asarray(rho, dtype=complex), tol=1e-11, what=what)
    tr = _trace(rho)
    if abs(tr - 1.0) > 1e-11:
        raise ValidationError(f"{what} must have unit trace, got {tr}")
    return rho


def integrate_master(rho0, gen: MasterGenerator, t: float, dt: float) -> np.ndarray:
    """Evolve a density matrix to time t with classical RK4 at step dt."""
    rho0 = require_density(rho0)
    if rho0.shape != (gen.dim, gen.dim):
        raise DimensionError(f"state shape {rho0.shape} does not match generator dimension {gen.dim}")
    return _integrate_stack(rho0, gen, t, dt)


def analytic_pauli_solution(n0, rates, t) -> np.ndarray:
    """Closed-form Bloch solution n_j(t) = exp(-2 (C - c_j) t) n_j(0), C = sum c.

    `t` may be a scalar or an array; the result has shape (..., 3).
    """
    n0 = np.asarray(n0, dtype=float)
    c = np.asarray(rates, dtype=float)
    if n0.shape != (3,) or c.shape != (3,):
        raise DimensionError("Bloch vector and rate vector must have shape (3,)")
    t = np.asarray(t, dtype=float)
    decay = np.exp(-2.0 * (np.sum(c) - c) * t[..., None])
    return n0 * decay


@dataclass
class DynamicalMap:
    """Superoperator acting on row-major vectorized d x d matrices."""

    superoperator: np.ndarray
    time: float
    dim: int = field(default=0)

    def __post_init__(self):
        s = np.asarray(self.superoperator, dtype=complex)
        d2 = s.shape[0]
        d = int(round(math.sqrt(d2)))
        if s.shape != (d2, d2) or d * d != d2:
            raise DimensionError(f"superoperator must be d^2 x d^2, got shape {s.shape}")
        self.superoperator = s
        self.dim = d
        tvec = np.eye(d, dtype=complex).reshape(-1)
        if max_abs(tvec @ s - tvec) > 1e-9:
            raise ValidationError("dynamical map is not trace preserving")
        for i in range(d):
            for j in range(d):
                out_ij = s[:, i * d + j].reshape(d, d)
                out_ji = s[:, j * d + i].reshape(d, d)
                if max_abs(out_ij.conj().T - out_ji) > 1e-9:
                    raise ValidationError("dynamical map is not Hermiticity preserving")


def apply_map(m: DynamicalMap, mats) -> np.ndarray:
    """Apply the map to a matrix or a batch of matrices of shape (..., d, d)."""
    d = m.dim
    mats = np.asarray(mats, dtype=complex)
    if mats.shape[-2:] != (d, d):
        raise DimensionError(f"operand shape {mats.shape} does not match map dimension {d}")
    vecs = mats.reshape(*mats.shape[:-2], d * d)
    out = np.einsum("ab,...b->...a", m.superoperator, vecs)
    return out.reshape(*mats.shape[:-2], d, d)


def _hermitian_basis(d: int):
    # Hermitian spanning set from which the matrix units are recombined
    # linearly: E_ii, then (E_ij + E_ji) and i(E_ij - E_ji) for i < j.
    mats = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1.0
        mats.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            plus = np.zeros((d, d), dtype=complex)
            plus[i, j] = 1.0
            plus[j, i] = 1.0
            minus = np.zeros((d, d), dtype=complex)
            minus[i, j] = 1.0j
            minus[j, i] = -1.0j
            mats.append(plus)
            mats.append(minus)
    return np.array(mats)


def _assemble_superoperator(basis_out: np.ndarray, d: int) -> np.ndarray:
    s = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        s[:, i * d + i] = basis_out[i].reshape(-1)
    pos = d
    for i in range(d):
        for j in range(i + 1, d):
            out_plus = basis_out[pos]
            out_minus = basis_out[pos + 1]
            pos += 2
            s[:, i * d + j] = ((out_plus - 1j * out_minus) / 2.0).reshape(-1)
            s[:, j * d + i] = ((out_plus + 1j * out_minus) / 2.0).reshape(-1)
    return s


def extract_map(gen: MasterGenerator, t: float, dt: float) -> DynamicalMap:
    """Tomography of the generator's evolution: integrate a Hermitian basis."""
    d = gen.dim
    evolved = _integrate_stack(_hermitian_basis(d), gen, t, dt)
    return DynamicalMap(_assemble_superoperator(evolved, d), time=float(t))


def map_grid(gen: MasterGenerator, times, dt: float) -> list[DynamicalMap]:
    """Maps at an ascending grid of times, integrated cumulatively.

    Grid times must be (near-)integer multiples of dt so the cumulative step
    sequence matches per-time extraction exactly.
    """
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(times < 0) or np.any(np.diff(times) <= 0)):
        raise ValidationError("grid times must be nonnegative and strictly increasing")
    d = gen.dim
    basis = _hermitian_basis(d)
    maps = []
    prev = 0.0
    for t in times:
        span = t - prev
        if span > 0:
            k = int(round(span / dt))
            if k < 1 or abs(k * dt - span) > 1e-9 * max(1.0, t):
                raise ValidationError("grid times must be integer multiples of dt")
            basis = _integrate_stack(basis, gen, k * dt, dt)
        maps.append(DynamicalMap(_assemble_superoperator(basis, d), time=float(t)))
        prev = t
    return maps


def bloch_block(m: DynamicalMap) -> np.ndarray:
    """3x3 real Bloch block B_kl = tr(sigma_k Lambda(sigma_l)) / 2 of a qubit map."""
    if m.dim != 2:
        raise DimensionError("Bloch block requires a qubit map")
    block = np.empty((3, 3))
    for l in range(3):
        out = apply_map(m, pauli(l + 1))
        for k in range(3):
            block[k, l] = 0.5 * _trace(pauli(k + 1) @ out).real
    return block


def pauli_channel_map(lambdas, time: float = 0.0) -> DynamicalMap:
    """Synthetic qubit map acting diagonally on the Bloch vector.

    Lambda(I) = I and Lambda(sigma_k) = lambdas[k-1] sigma_k; no positivity
    is implied, which makes this useful for constructing counter-cases.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (3,):
        raise DimensionError(f"need three Bloch multipliers, got shape {lam.shape}")
    sigmas = [np.eye(2, dtype=complex)] + [pauli(k) for k in (1, 2, 3)]
    mults = np.concatenate([[1.0], lam])
    s = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2), dtype=complex)
            e[i, j] = 1.0
            out = sum(
                mults[mu] * 0.5 * _trace(sigmas[mu] @ e) * sigmas[mu] for mu in range(4)
            )
            s[:, i * 2 + j] = out.reshape(-1)
    return DynamicalMap(s, time=time)


@dataclass
class ChoiMatrix:
    """Unnormalized Choi matrix sum_ij E_ij (x) Lambda(E_ij); trace = d."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if max_abs(self.matrix - self.matrix.conj().T) > 1e-10:
            raise ValidationError("Choi matrix must be Hermitian")
        if abs(_trace(self.matrix) - self.dim) > 1e-9:
            raise ValidationError("Choi matrix of a trace-preserving map must have trace d")


def choi_matrix(m: DynamicalMap) -> ChoiMatrix:
    d = m.dim
    c = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            c += np.kron(e, m.superoperator[:, i * d + j].reshape(d, d))
    return ChoiMatrix(c, dim=d)


@dataclass
class CpVerdict:
    cp: bool
    min_eigenvalue: float  # divided by d (spectrum summing to 1)
    min_eigenvalue_raw: float
    witness: np.ndarray


def cp_verdict(choi: ChoiMatrix, tol: float = 1e-9) -> CpVerdict:
    """Complete-positivity test: the Choi matrix must be positive semidefinite."""
    values, vectors = hermitian_eigen(choi.matrix)
    raw = float(values[0])
    normalized = raw / choi.dim
    return CpVerdict(
        cp=bool(normalized >= -tol),
        min_eigenvalue=normalized,
        min_eigenvalue_raw=raw,
        witness=vectors[:, 0].copy(),
    )


@dataclass
class PositivityVerdict:
    positive_on_samples: bool
    min_output_eigenvalue: float


def _min_eigenvalue_2x2(mats) -> np.ndarray:
    # Closed form for Hermitian 2x2 batches.
    a = mats[..., 0, 0].real
    b = mats[..., 1, 1].real
    c = mats[..., 0, 1]
    half_gap = np.sqrt(((a - b) / 2.0) ** 2 + np.abs(c) ** 2)
    return (a + b) / 2.0 - half_gap


def positivity_verdict(m: DynamicalMap, samples: int, seed: int, tol: float = 1e-9) -> PositivityVerdict:
    """Apply the map to Haar-random pure states and report the worst output eigenvalue."""
    if samples < 1:
        raise ValidationError(f"need at least one sample, got {samples}")
    psi = random_state(seed, m.dim, np.arange(samples))
    rho = np.einsum("...i,...j->...ij", psi, psi.conj())
    out = apply_map(m, rho)
    if m.dim == 2:
        min_eig = float(np.min(_min_eigenvalue_2x2(out)))
    else:
        min_eig = min(float(hermitian_eigen(_symmetrize(o))[0][0]) for o in out)
    return PositivityVerdict(positive_on_samples=bool(min_eig >= -tol), min_output_eigenvalue=min_eig)
