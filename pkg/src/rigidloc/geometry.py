"""Rotation primitives on the 3x3 orthogonal group.

The skew parametrisation follows the layout used throughout the Newton
solver::

    X(x) = [[0,   -x1, -x2],
            [x1,   0,  -x3],
            [x2,  x3,   0 ]]

so ``x1`` generates rotations about the third axis, ``x3`` about the first
axis and ``x2`` about the second axis (with a sign flip).
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import ConfigurationError, DegenerateInputError

__all__ = [
    "Pose",
    "EULER_CONVENTIONS",
    "skew",
    "rotation_exp",
    "elementary_rotation",
    "euler_to_rotation",
    "nearest_orthogonal",
    "rigid_transform",
    "orthogonality_error",
]

# Below this angle the Rodrigues coefficients are replaced by their series.
SMALL_ANGLE = 1e-8

EULER_CONVENTIONS = tuple("".join(p) for p in permutations("XYZ"))


@dataclass(frozen=True)
class Pose:
    """Rigid body pose ``[Q | t]``: rotation (3x3) and translation (3,)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("pose entries must be finite")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @property
    def matrix(self) -> np.ndarray:
        """The 3x4 matrix ``[Q | t]``."""
        return np.column_stack([self.rotation, self.translation])


def skew(x) -> np.ndarray:
    x1, x2, x3 = np.asarray(x, dtype=float).reshape(3)
    return np.array([[0.0, -x1, -x2],
                     [x1, 0.0, -x3],
                     [x2, x3, 0.0]])


def rotation_exp(x) -> np.ndarray:
    """Matrix exponential ``exp(skew(x))`` in closed form.

    Uses ``I + sin(a)/a X + (1 - cos(a))/a^2 X^2`` with ``a = ||x||``, which
    holds because ``X^3 = -a^2 X`` for any 3x3 skew-symmetric matrix.
    """
    X = skew(x)
    angle = float(np.linalg.norm(x))
    if angle < SMALL_ANGLE:
        s, c = 1.0 - angle**2 / 6.0, 0.5 - angle**2 / 24.0
    else:
        s, c = np.sin(angle) / angle, (1.0 - np.cos(angle)) / angle**2
    return np.eye(3) + s * X + c * (X @ X)


def elementary_rotation(axis: int, angle: float) -> np.ndarray:
    """Right-handed rotation by ``angle`` radians about coordinate ``axis`` (0, 1 or 2)."""
    c, s = np.cos(angle), np.sin(angle)
    i, j = (axis + 1) % 3, (axis + 2) % 3
    R = np.eye(3)
    R[i, i] = c
    R[i, j] = -s
    R[j, i] = s
    R[j, j] = c
    return R


def euler_to_rotation(angles_deg, convention: str = "XYZ") -> np.ndarray:
    """Compose three elementary rotations given in degrees.

    ``angles_deg[k]`` is the angle about axis ``k`` (X, Y, Z). The convention
    string gives the order in which the rotations are applied, so ``"XYZ"``
    rotates about X first and returns ``Rz @ Ry @ Rx``.
    """
    convention = str(convention).upper()
    if convention not in EULER_CONVENTIONS:
        raise ConfigurationError(
            f"unknown Euler convention {convention!r}; expected one of {EULER_CONVENTIONS}")
    angles = np.deg2rad(np.asarray(angles_deg, dtype=float).reshape(3))
    Q = np.eye(3)
    for letter in convention:
        axis = "XYZ".index(letter)
        Q = elementary_rotation(axis, angles[axis]) @ Q
    return Q


def nearest_orthogonal(M, rtol: float = 1e-12) -> np.ndarray:
    """Orthogonal polar factor of a nonsingular 3x3 matrix.

    Equals ``(M M^T)^{-1/2} M`` and minimises ``||Q - M||_F`` over ``Q^T Q = I``.
    The determinant of the result carries the sign of ``det(M)``.
    """
    M = np.asarray(M, dtype=float)
    U, sv, Vt = np.linalg.svd(M)
    if not np.all(np.isfinite(sv)) or sv[-1] <= rtol * max(sv[0], np.finfo(float).tiny):
        raise DegenerateInputError(
            f"matrix is singular (singular values {sv}); orthogonal projection is not unique")
    return U @ Vt


def rigid_transform(pose: Pose, C) -> np.ndarray:
    """Absolute sensor positions ``Q C + t 1^T`` for body-frame topology ``C`` (3xN)."""
    C = np.asarray(C, dtype=float)
    return pose.rotation @ C + pose.translation[:, None]


def orthogonality_error(Q) -> float:
    """Frobenius norm of ``Q^T Q - I``."""
    Q = np.asarray(Q, dtype=float)
    return float(np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])))
