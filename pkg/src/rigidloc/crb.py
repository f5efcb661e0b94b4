"""Cramér-Rao bounds for ``q_e = vec([Q | t])`` under the orthogonality constraint.

The whitened model ``dbar = (Ce^T kron Abar) q_e + noise`` has unit noise
covariance, so the Fisher information is ``J^T J`` with
``J = [C^T kron Abar | 1_N kron Abar]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, UnidentifiableError
from .geometry import orthogonality_error

__all__ = [
    "CrbResult",
    "fisher_jacobian",
    "fim",
    "constraint_gradient",
    "constraint_nullspace",
    "uc_crb",
    "unconstrained_crb",
    "crb_positions",
]

UNITARY_TOL = 1e-8


@dataclass(frozen=True)
class CrbResult:
    """Bound ``cov`` on ``q_e`` (12x12) with root-trace summaries of its blocks."""

    cov: np.ndarray

    @property
    def rcrb_q(self) -> float:
        return float(np.sqrt(max(np.trace(self.cov[:9, :9]), 0.0)))

    @property
    def rcrb_t(self) -> float:
        return float(np.sqrt(max(np.trace(self.cov[9:, 9:]), 0.0)))


def fisher_jacobian(Abar, C) -> np.ndarray:
    """Explicit ``(M-1)N x 12`` Jacobian of the whitened linear model."""
    Abar = np.asarray(Abar, dtype=float)
    C = np.asarray(C, dtype=float)
    N = C.shape[1]
    return np.hstack([np.kron(C.T, Abar), np.kron(np.ones((N, 1)), Abar)])


def fim(Abar, C) -> np.ndarray:
    """12x12 Fisher information in block form.

    ``[[C C^T kron G, (C 1) kron G], [(C 1)^T kron G, N G]]`` with
    ``G = Abar^T Abar``.
    """
    Abar = np.asarray(Abar, dtype=float)
    C = np.asarray(C, dtype=float)
    G = Abar.T @ Abar
    csum = C.sum(axis=1, keepdims=True)
    F = np.empty((12, 12))
    F[:9, :9] = np.kron(C @ C.T, G)
    F[:9, 9:] = np.kron(csum, G)
    F[9:, :9] = F[:9, 9:].T
    F[9:, 9:] = C.shape[1] * G
    return F


def constraint_gradient(Q) -> np.ndarray:
    """6x12 gradient of the non-redundant orthogonality constraints.

    Rows correspond to ``q1.q1 - 1, q2.q1, q3.q1, q2.q2 - 1, q3.q2, q3.q3 - 1``.
    """
    q1, q2, q3 = np.asarray(Q, dtype=float).T
    z = np.zeros(3)
    return np.array([
        np.concatenate([2 * q1, z, z, z]),
        np.concatenate([q2, q1, z, z]),
        np.concatenate([q3, z, q1, z]),
        np.concatenate([z, 2 * q2, z, z]),
        np.concatenate([z, q3, q2, z]),
        np.concatenate([z, z, 2 * q3, z]),
    ])


def constraint_nullspace(Q) -> np.ndarray:
    """Closed-form orthonormal basis (12x6) of the null space of :func:`constraint_gradient`."""
    Q = np.asarray(Q, dtype=float)
    if orthogonality_error(Q) > UNITARY_TOL:
        raise DegenerateInputError("constraint null space requires an orthogonal Q")
    q1, q2, q3 = Q.T
    z = np.zeros(3)
    U = np.zeros((12, 6))
    U[:9, 0] = np.concatenate([-q3, z, q1])
    U[:9, 1] = np.concatenate([z, -q3, q2])
    U[:9, 2] = np.concatenate([q2, -q1, z])
    U[:9, :3] /= np.sqrt(2.0)
    U[9:, 3:] = np.eye(3)
    return U


def uc_crb(F, Q) -> CrbResult:
    """Constrained bound ``U (U^T F U)^{-1} U^T`` evaluated at the true rotation."""
    F = np.asarray(F, dtype=float)
    U = constraint_nullspace(Q)
    reduced = U.T @ F @ U
    sv = np.linalg.svd(reduced, compute_uv=False)
    if not sv[-1] > 1e-13 * sv[0]:
        raise UnidentifiableError(f"reduced Fisher information is singular (singular values {sv})")
    cov = U @ np.linalg.solve(reduced, U.T)
    return CrbResult(0.5 * (cov + cov.T))


def unconstrained_crb(F) -> CrbResult:
    F = np.asarray(F, dtype=float)
    sv = np.linalg.svd(F, compute_uv=False)
    if not sv[-1] > 1e-13 * sv[0]:
        raise UnidentifiableError("Fisher information is singular")
    cov = np.linalg.inv(F)
    return CrbResult(0.5 * (cov + cov.T))


def crb_positions(crb: CrbResult, C) -> np.ndarray:
    """Bound on ``vec(S)`` (3N x 3N) via ``s = (Ce^T kron I3) q_e``."""
    C = np.asarray(C, dtype=float)
    Ce = np.vstack([C, np.ones(C.shape[1])])
    T = np.kron(Ce.T, np.eye(3))
    return T @ crb.cov @ T.T
