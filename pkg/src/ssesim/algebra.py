"""Small dense complex linear algebra for qubit-scale operators.

Pauli matrices, Bloch-vector conversions, a cyclic Jacobi eigensolver for
complex Hermitian matrices (dimensions <= 8), and Haar-random state vectors
drawn from counter-based Gaussians.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .errors import DimensionError, ValidationError

MAX_EIGEN_DIM = 8

_SIGMA = np.array(
    [
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0j], [1.0j, 0.0]],
        [[1.0, 0.0], [0.0, -1.0]],
    ],
    dtype=complex,
)


def pauli(k: int) -> np.ndarray:
    """Return the 2x2 Pauli matrix sigma_k for k in {1, 2, 3}."""
    if k not in (1, 2, 3):
        raise ValidationError(f"pauli index must be 1, 2 or 3, got {k!r}")
    return _SIGMA[k - 1].copy()


def max_abs(a) -> float:
    """Largest entrywise magnitude."""
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_hermitian(a, tol: float = 1e-12) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and max_abs(a - a.conj().T) <= tol


def require_hermitian(a, tol: float = 1e-12, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {a.shape}")
    dev = max_abs(a - a.conj().T)
    if dev > tol:
        raise ValidationError(f"{what} is not Hermitian (max |A - A^dag| = {dev:.3e})")
    return a


def require_normalized(psi, tol: float = 1e-8, what: str = "state") -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm2 = np.einsum("...i,...i->...", psi.conj(), psi).real
    dev = max_abs(norm2 - 1.0)
    if dev > tol:
        raise ValidationError(f"{what} is not normalized (max ||psi||^2 - 1| = {dev:.3e})")
    return psi


def bloch_from_state(psi) -> np.ndarray:
    """Bloch vector n_k = <psi|sigma_k|psi> of a normalized qubit state.

    Accepts a single state of shape (2,) or a batch of shape (..., 2); the
    result has shape (..., 3).
    """
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != 2:
        raise DimensionError(f"Bloch conversion requires qubit states, got dim {psi.shape[-1]}")
    require_normalized(psi)
    a, b = psi[..., 0], psi[..., 1]
    cross = a.conj() * b
    return np.stack(
        [2.0 * cross.real, 2.0 * cross.imag, (a.conj() * a - b.conj() * b).real],
        axis=-1,
    )


def state_from_bloch(n) -> np.ndarray:
    """Pure qubit state (cos(theta/2), e^{i phi} sin(theta/2)) for a unit Bloch vector."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise DimensionError(f"Bloch vector must have shape (3,), got {n.shape}")
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > 1e-8:
        raise ValidationError(f"Bloch vector of a pure state must be unit length, got ||n|| = {norm}")
    theta = np.arccos(np.clip(n[2] / norm, -1.0, 1.0))
    phi = np.arctan2(n[1], n[0])
    return np.array([np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)], dtype=complex)


def _jacobi_rotation(a_pp: float, a_qq: float, a_pq: complex):
    # Annihilates the (p, q) entry of the Hermitian 2x2 block; returns the
    # rotation parameters (c, s, phase) with |a_pq| = r, a_pq = r * phase.
    r = abs(a_pq)
    phase = a_pq / r
    tau = (a_pp - a_qq) / (2.0 * r)
    sign = 1.0 if tau >= 0.0 else -1.0
    t = sign / (abs(tau) + np.hypot(tau, 1.0))
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c, phase


def hermitian_eigen(a, tol: float = 1e-13, max_sweeps: int = 60):
    """Eigendecomposition of a complex Hermitian matrix by cyclic Jacobi rotations.

    Returns (w, v) with eigenvalues w ascending and unitary v satisfying
    a @ v = v @ diag(w).  Sweeps stop once the off-diagonal Frobenius norm
    drops below `tol`.  Dimensions above 8 are rejected; this solver targets
    operator-space matrices, not general numerics.
    """
    a = require_hermitian(a, tol=1e-12, what="eigensolver input")
    n = a.shape[0]
    if n > MAX_EIGEN_DIM:
        raise ValidationError(f"eigensolver supports dimensions <= {MAX_EIGEN_DIM}, got {n}")
    work = (a + a.conj().T) / 2.0
    vecs = np.eye(n, dtype=complex)
    if n == 1:
        return work.real.diagonal().copy(), vecs

    def _off_norm(m):
        return np.sqrt(np.sum(np.abs(m - np.diag(np.diagonal(m))) ** 2))

    for _ in range(max_sweeps):
        if _off_norm(work) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(work[p, q]) == 0.0:
                    continue
                c, s, phase = _jacobi_rotation(work[p, p].real, work[q, q].real, work[p, q])
                # Column update: A <- A U with U = [[c, -s*phase], [s*conj(phase), c]].
                col_p = work[:, p].copy()
                col_q = work[:, q].copy()
                work[:, p] = c * col_p + s * np.conj(phase) * col_q
                work[:, q] = -s * phase * col_p + c * col_q
                # Row update: A <- U^dag A.
                row_p = work[p, :].copy()
                row_q = work[q, :].copy()
                work[p, :] = c * row_p + s * phase * row_q
                work[q, :] = -s * np.conj(phase) * row_p + c * row_q
                work[p, q] = 0.0
                work[q, p] = 0.0
                work[p, p] = work[p, p].real
                work[q, q] = work[q, q].real
                col_p = vecs[:, p].copy()
                col_q = vecs[:, q].copy()
                vecs[:, p] = c * col_p + s * np.conj(phase) * col_q
                vecs[:, q] = -s * phase * col_p + c * col_q
    else:
        if _off_norm(work) >= tol:
            raise RuntimeError("Jacobi eigensolver did not converge")

    values = np.diagonal(work).real.copy()
    order = np.argsort(values, kind="stable")
    return values[order], vecs[:, order]


def random_state(seed: int, d: int, index=0) -> np.ndarray:
    """Haar-random state(s) of dimension d from the counter-based stream.

    `index` may be an integer or an integer array; the result has shape
    (..., d) with one independent state per index.  The same (seed, d, index)
    always yields the same state, regardless of batching or call order.
    """
    if d < 2:
        raise DimensionError(f"state dimension must be >= 2, got {d}")
    idx = np.asarray(index)
    comp = np.arange(2 * d)
    z = rng.normals(rng.DOMAIN_STATE, seed, idx[..., None], comp)
    g = z[..., :d] + 1j * z[..., d:]
    return g / np.linalg.norm(g, axis=-1, keepdims=True)
