"""Range synthesis and the whitened, projected linear models.

Squared ranges obey ``d_n = u - 2 A^T s_n + ||s_n||^2 1 + n_n``. Rows are
whitened with a common diagonal ``W`` and the ``||s_n||^2`` term is removed
by an isometry ``U_M`` whose columns span the orthogonal complement of
``W 1``, giving ``Dbar = Abar S + noise`` with ``Abar = -2 U_M^T W A^T``.
Projecting out ``t 1^T`` with ``U_N`` further gives
``Dtil = Abar Q Cbar + noise``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    DegenerateMeasurementError,
    GeometryError,
    InsufficientSensorsError,
)
from .geometry import Pose, rigid_transform

__all__ = [
    "Scenario",
    "RangeData",
    "WhitenedModel",
    "CenteredModel",
    "db_to_linear",
    "true_ranges",
    "simulate_ranges",
    "estimate_noise_covariance",
    "squared_range_noise_variance",
    "isometry_nullspace_basis",
    "build_whitened_model",
    "oracle_whitened_model",
    "center_model",
    "perturb_topology",
]

# Relative singular-value floor below which Abar is declared rank deficient.
RANK_RTOL = 1e-10
DEFAULT_CLAMP = 1e-6


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Anchors ``A`` (3xM), body-frame topology ``C`` (3xN), true pose and reference range."""

    anchors: np.ndarray
    topology: np.ndarray
    pose: Pose
    zeta: float

    def __post_init__(self):
        A = np.asarray(self.anchors, dtype=float)
        C = np.asarray(self.topology, dtype=float)
        if A.ndim != 2 or A.shape[0] != 3 or C.ndim != 2 or C.shape[0] != 3:
            raise ValueError("anchors and topology must be 3xM and 3xN arrays")
        M, N = A.shape[1], C.shape[1]
        if M < 4:
            raise GeometryError(f"need at least 4 anchors, got {M}")
        if (M - 1) * N < 12:
            raise InsufficientSensorsError(
                f"(M-1)*N = {(M - 1) * N} < 12: pose is not identifiable")
        if not self.zeta > 0:
            raise ValueError(f"reference range must be positive, got {self.zeta}")
        object.__setattr__(self, "anchors", A)
        object.__setattr__(self, "topology", C)

    @property
    def positions(self) -> np.ndarray:
        return rigid_transform(self.pose, self.topology)

    def ranges(self) -> np.ndarray:
        return true_ranges(self.anchors, self.positions)


@dataclass(frozen=True)
class RangeData:
    Y: np.ndarray
    Draw: np.ndarray
    zeta: float


@dataclass(frozen=True)
class WhitenedModel:
    Dbar: np.ndarray
    Abar: np.ndarray
    W: np.ndarray
    UM: np.ndarray
    clamped: int = 0

    @property
    def Abar_pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.Abar)


@dataclass(frozen=True)
class CenteredModel:
    Dtil: np.ndarray
    Cbar: np.ndarray
    UN: np.ndarray


def true_ranges(A, S) -> np.ndarray:
    """Euclidean distances between anchor columns of ``A`` and sensor columns of ``S`` (MxN)."""
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    return np.linalg.norm(A[:, :, None] - S[:, None, :], axis=0)


def simulate_ranges(R, zeta: float, rng: np.random.Generator | None = None) -> RangeData:
    """Add zero-mean Gaussian noise with std ``r / sqrt(zeta)`` to every true range.

    ``zeta = inf`` returns the noiseless ranges without touching ``rng``.
    """
    R = np.asarray(R, dtype=float)
    if not zeta > 0:
        raise ValueError(f"reference range must be positive, got {zeta}")
    if np.isinf(zeta):
        Y = R.copy()
    else:
        if rng is None:
            raise ValueError("a random generator is required for finite zeta")
        Y = R + rng.standard_normal(R.shape) * (R / np.sqrt(zeta))
    return RangeData(Y=Y, Draw=Y * Y, zeta=float(zeta))


def estimate_noise_covariance(Draw, zeta: float, reference: int = 0,
                              clamp: float | None = None) -> np.ndarray:
    """Per-anchor noise variances ``d_{m,ref}^2 / zeta`` of the squared ranges.

    Non-positive reference measurements raise unless ``clamp`` is given, in
    which case they are replaced by ``clamp`` (in m^2).
    """
    d_ref = np.asarray(Draw, dtype=float)[:, reference]
    bad = ~(d_ref > 0)
    if np.any(bad):
        if clamp is None:
            raise DegenerateMeasurementError(
                f"non-positive squared range to reference sensor at anchors {np.flatnonzero(bad).tolist()}")
        d_ref = np.where(bad, clamp, d_ref)
    return d_ref**2 / zeta


def squared_range_noise_variance(R, zeta: float, reference: int = 0) -> np.ndarray:
    """First-order variance ``4 r_{m,ref}^4 / zeta`` of the squared-range noise.

    This is the exact leading term of ``var(2 r v + v^2)`` under the
    reference-sensor simplification. It differs from the estimator's
    whitening variance by the constant factor 4, which leaves every estimate
    unchanged but matters for the Fisher information.
    """
    r_ref = np.asarray(R, dtype=float)[:, reference]
    return 4.0 * r_ref**4 / zeta


def isometry_nullspace_basis(w) -> np.ndarray:
    """Orthonormal basis (Mx(M-1)) of the orthogonal complement of ``w``."""
    w = np.asarray(w, dtype=float).reshape(-1)
    norm = np.linalg.norm(w)
    if not norm > 0 or not np.isfinite(norm):
        raise DegenerateInputError("cannot build a null-space basis for a zero vector")
    Qfull, _ = np.linalg.qr((w / norm)[:, None], mode="complete")
    return Qfull[:, 1:]


def build_whitened_model(A, Draw, zeta: float, reference: int = 0,
                         clamp: float | None = None,
                         variances=None) -> WhitenedModel:
    """Whitened, projected model ``Dbar = Abar S + noise``.

    ``variances`` overrides the data-driven noise estimate (used for the
    oracle whitener); otherwise they come from
    :func:`estimate_noise_covariance`.
    """
    A = np.asarray(A, dtype=float)
    Draw = np.asarray(Draw, dtype=float)
    M = A.shape[1]
    if M < 4:
        raise GeometryError(f"need at least 4 anchors, got {M}")
    clamped = 0
    if variances is None:
        if clamp is not None:
            clamped = int(np.count_nonzero(~(Draw[:, reference] > 0)))
        variances = estimate_noise_covariance(Draw, zeta, reference, clamp)
    weights = 1.0 / np.sqrt(np.asarray(variances, dtype=float))
    UM = isometry_nullspace_basis(weights)
    u = np.sum(A * A, axis=0)
    D = Draw - u[:, None]
    WU = weights[:, None] * UM  # W^T U_M, W diagonal
    Dbar = WU.T @ D
    Abar = -2.0 * WU.T @ A.T
    sv = np.linalg.svd(Abar, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise GeometryError(
            f"projected anchor matrix is rank deficient: smallest singular value {sv[-1]:.3e} "
            f"(largest {sv[0]:.3e})")
    return WhitenedModel(Dbar=Dbar, Abar=Abar, W=np.diag(weights), UM=UM, clamped=clamped)


def oracle_whitened_model(A, S, zeta: float, reference: int = 0) -> WhitenedModel:
    """Noise-free model whitened with the true squared-range noise covariance."""
    R = true_ranges(A, S)
    return build_whitened_model(A, R * R, zeta,
                                variances=squared_range_noise_variance(R, zeta, reference))


def center_model(wm: WhitenedModel, C) -> CenteredModel:
    """Eliminate the translation by right-multiplying with ``U_N``."""
    C = np.asarray(C, dtype=float)
    N = C.shape[1]
    if N < 2:
        raise InsufficientSensorsError("rotation is unobservable with fewer than 2 sensors")
    UN = isometry_nullspace_basis(np.ones(N))
    return CenteredModel(Dtil=wm.Dbar @ UN, Cbar=C @ UN, UN=UN)


def perturb_topology(C, sigma_e: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Return ``C + E`` with ``E`` i.i.d. N(0, sigma_e^2)."""
    C = np.asarray(C, dtype=float)
    if sigma_e < 0:
        raise ValueError("sigma_e must be non-negative")
    if sigma_e == 0:
        return C.copy()
    return C + sigma_e * rng.standard_normal(C.shape)
