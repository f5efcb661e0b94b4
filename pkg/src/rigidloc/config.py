"""Experiment configuration: INI-style files with ``[section]`` headers.

Example::

    [scenario]
    anchors = 4
    anchor_extent = 1000
    topology = pyramid
    rotation_deg = 20, -25, 10
    translation = 100, 100, 55

    [noise]
    zeta_db = 20, 40, 60, 80, 100

    [experiment]
    trials = 2000
    seed = 7

Unknown sections or keys are rejected so typos do not silently fall back
to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .estimators import METHODS
from .geometry import EULER_CONVENTIONS, Pose, euler_to_rotation
from .scenarios import REFERENCE_ANGLES_DEG, REFERENCE_TRANSLATION, TOPOLOGY_PRESETS
from .wopp import NewtonSettings

__all__ = ["ExperimentConfig", "load_config", "parse_config", "dump_config"]


@dataclass(frozen=True)
class ExperimentConfig:
    # [scenario]
    anchors: int = 4
    anchor_extent: float = 1000.0
    anchor_points: tuple | None = None
    topology: str = "pyramid"
    topology_size: float = 5.0
    topology_points: tuple | None = None
    rotation_deg: tuple = REFERENCE_ANGLES_DEG
    euler_convention: str = "XYZ"
    translation: tuple = REFERENCE_TRANSLATION
    # [noise]
    zeta_db: tuple = (80.0,)
    sigma_e: float = 0.0
    reference_sensor: int = 0
    clamp: bool = False
    # [experiment]
    trials: int = 2000
    seed: int = 0
    fixed_anchors: bool = False
    estimators: tuple = METHODS
    workers: int = 1
    # [newton]
    epsilon: float = 1e-6
    max_iterations: int = 50
    linesearch_grid: int = 20

    def __post_init__(self):
        for name in ("rotation_deg", "translation", "zeta_db"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for name in ("anchor_points", "topology_points"):
            pts = getattr(self, name)
            if pts is not None:
                object.__setattr__(self, name, tuple(tuple(float(v) for v in p) for p in pts))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if len(self.zeta_db) == 0:
            raise ConfigurationError("zeta_db must list at least one reference range")
        if self.euler_convention not in EULER_CONVENTIONS:
            raise ConfigurationError(f"unknown Euler convention {self.euler_convention!r}")
        bad = [m for m in self.estimators if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown estimators {bad}; expected a subset of {METHODS}")
        if self.sigma_e < 0:
            raise ConfigurationError("sigma_e must be non-negative")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.topology_points is None and self.topology not in TOPOLOGY_PRESETS:
            raise ConfigurationError(
                f"unknown topology preset {self.topology!r}; use one of "
                f"{sorted(TOPOLOGY_PRESETS)} or give topology_points")
        M = self.num_anchors
        N = self.topology_matrix().shape[1]
        if M < 4:
            raise ConfigurationError(f"need at least 4 anchors, got {M}")
        if (M - 1) * N < 12:
            raise ConfigurationError(f"(M-1)*N = {(M - 1) * N} < 12: pose is not identifiable")
        if not 0 <= self.reference_sensor < N:
            raise ConfigurationError(f"reference_sensor must be in [0, {N})")
        try:
            NewtonSettings(self.epsilon, self.max_iterations, self.linesearch_grid)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def num_anchors(self) -> int:
        if self.anchor_points is not None:
            return len(self.anchor_points)
        return self.anchors

    def topology_matrix(self) -> np.ndarray:
        if self.topology_points is not None:
            return np.array(self.topology_points, dtype=float).T
        return TOPOLOGY_PRESETS[self.topology](self.topology_size)

    def anchor_matrix(self) -> np.ndarray | None:
        if self.anchor_points is None:
            return None
        return np.array(self.anchor_points, dtype=float).T

    def pose(self) -> Pose:
        Q = euler_to_rotation(self.rotation_deg, self.euler_convention)
        return Pose(Q, np.array(self.translation, dtype=float))

    def newton(self) -> NewtonSettings:
        return NewtonSettings(self.epsilon, self.max_iterations, self.linesearch_grid)

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


_SECTIONS = {
    "scenario": ("anchors", "anchor_extent", "anchor_points", "topology", "topology_size",
                 "topology_points", "rotation_deg", "euler_convention", "translation"),
    "noise": ("zeta_db", "sigma_e", "reference_sensor", "clamp"),
    "experiment": ("trials", "seed", "fixed_anchors", "estimators", "workers"),
    "newton": ("epsilon", "max_iterations", "linesearch_grid"),
}
_INT = {"anchors", "reference_sensor", "trials", "seed", "workers", "max_iterations",
        "linesearch_grid"}
_FLOAT = {"anchor_extent", "topology_size", "sigma_e", "epsilon"}
_BOOL = {"clamp", "fixed_anchors"}
_VECTOR = {"rotation_deg", "translation"}
_POINTS = {"anchor_points", "topology_points"}


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _points(text):
    pts = tuple(_floats(p) for p in text.split(";") if p.strip())
    if not pts or any(len(p) != 3 for p in pts):
        raise ValueError("points must be ';'-separated x, y, z triples")
    return pts


def _convert(key, raw):
    raw = raw.strip()
    if key in _INT:
        return int(raw)
    if key in _FLOAT:
        return float(raw)
    if key in _BOOL:
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ValueError(f"expected a boolean, got {raw!r}")
        return low in ("true", "yes", "1", "on")
    if key in _VECTOR:
        vals = _floats(raw)
        if len(vals) != 3:
            raise ValueError("expected three numbers")
        return vals
    if key in _POINTS:
        return _points(raw)
    if key == "zeta_db":
        return _floats(raw)
    if key == "estimators":
        return tuple(v.strip().lower() for v in raw.replace(",", " ").split())
    if key == "euler_convention":
        return raw.upper()
    return raw


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse configuration: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            try:
                values[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigurationError(f"[{section}] {key}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(repr(float(v)) for v in p) for p in value)
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialise every field; ``parse_config(dump_config(cfg)) == cfg``."""
    names = {f.name for f in fields(cfg)}
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            assert key in names
            value = getattr(cfg, key)
            if value is None:
                continue
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)
