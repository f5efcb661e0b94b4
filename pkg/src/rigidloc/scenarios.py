"""Scenario generators for simulation: topology presets and anchor deployments."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .geometry import Pose, euler_to_rotation

__all__ = [
    "pyramid_topology",
    "TOPOLOGY_PRESETS",
    "random_anchors",
    "reference_pose",
    "REFERENCE_ANGLES_DEG",
    "REFERENCE_TRANSLATION",
]

REFERENCE_ANGLES_DEG = (20.0, -25.0, 10.0)
REFERENCE_TRANSLATION = (100.0, 100.0, 55.0)


def pyramid_topology(size: float = 5.0) -> np.ndarray:
    """Ten sensors on the edges of a square-based pyramid (3x10, metres).

    The base is a ``size`` x ``size`` square centred on the origin in the
    z = 0 plane and the apex sits at height ``size``. Sensors: the four base
    corners, the apex, the midpoints of the four slanted edges and the
    midpoint of one base edge.
    """
    h = size / 2.0
    corners = np.array([[h, h, 0.0], [-h, h, 0.0], [-h, -h, 0.0], [h, -h, 0.0]])
    apex = np.array([0.0, 0.0, size])
    lateral = (corners + apex) / 2.0
    base_mid = (corners[0] + corners[1]) / 2.0
    return np.vstack([corners, apex, lateral, base_mid]).T


TOPOLOGY_PRESETS = {"pyramid": pyramid_topology}


def random_anchors(M: int, extent: float, rng: np.random.Generator) -> np.ndarray:
    """``M`` anchors uniform in the cube ``[-extent/2, extent/2]^3`` (3xM)."""
    if M < 4:
        raise ConfigurationError(f"need at least 4 anchors, got {M}")
    return rng.uniform(-extent / 2.0, extent / 2.0, size=(3, M))


def reference_pose(convention: str = "XYZ") -> Pose:
    return Pose(euler_to_rotation(REFERENCE_ANGLES_DEG, convention), np.array(REFERENCE_TRANSLATION))
