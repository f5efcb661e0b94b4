"""Rigid body localization from anchor-sensor range measurements.

Joint rotation and translation estimation for a body carrying sensors in a
known layout, with Cramér-Rao bounds and a Monte-Carlo sweep engine.
"""
from .config import ExperimentConfig, load_config, parse_config
from .crb import CrbResult, fim, uc_crb, unconstrained_crb
from .errors import RigidLocError
from .estimators import METHODS, PoseEstimate, estimate
from .geometry import Pose, euler_to_rotation, rotation_exp, skew
from .measurement import build_whitened_model, center_model, simulate_ranges
from .montecarlo import run_experiment

__version__ = "0.1.0"

__all__ = [
    "CrbResult",
    "ExperimentConfig",
    "METHODS",
    "Pose",
    "PoseEstimate",
    "RigidLocError",
    "build_whitened_model",
    "center_model",
    "estimate",
    "euler_to_rotation",
    "fim",
    "load_config",
    "parse_config",
    "rotation_exp",
    "run_experiment",
    "simulate_ranges",
    "skew",
    "uc_crb",
    "unconstrained_crb",
]
