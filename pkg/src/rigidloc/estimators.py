"""Pose estimators for range-based rigid body localization.

All estimators consume a :class:`~rigidloc.measurement.WhitenedModel`
(``Dbar = Abar S``) and, for the constrained ones, the translation-free
:class:`~rigidloc.measurement.CenteredModel` (``Dtil = Abar Q Cbar``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NonUniqueSolutionError, TopologyError
from .geometry import Pose
from .measurement import CenteredModel, WhitenedModel, center_model
from .wopp import NewtonSettings, WoppProblem, solve_wopp

__all__ = [
    "PoseEstimate",
    "METHODS",
    "classical_ls",
    "unconstrained_ls",
    "solve_opp",
    "suc_ls",
    "suc_tls",
    "ouc_ls",
    "ouc_tls",
    "tls_weighting",
    "ta_localization",
    "estimate",
]

METHODS = ("ls", "suc-ls", "ouc-ls", "suc-tls", "ouc-tls")
UNITARY_METHODS = METHODS[1:]
OPP_RTOL = 1e-12


@dataclass(frozen=True)
class PoseEstimate:
    rotation: np.ndarray
    translation: np.ndarray
    method: str
    iterations: int = 0
    converged: bool = True

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.rotation))

    @property
    def pose(self) -> Pose:
        return Pose(self.rotation, self.translation)


def classical_ls(wm: WhitenedModel) -> np.ndarray:
    """Per-sensor LS positions ``Abar^+ Dbar`` (3xN), ignoring the topology."""
    S, *_ = np.linalg.lstsq(wm.Abar, wm.Dbar, rcond=None)
    return S


def unconstrained_ls(wm: WhitenedModel, C) -> PoseEstimate:
    """Joint LS fit of ``[Q | t]`` without the orthogonality constraint.

    ``(Ce^T kron Abar)^+ = (Ce^T)^+ kron Abar^+`` so the vectorised solution
    reduces to ``Abar^+ Dbar Ce^+``.
    """
    C = np.asarray(C, dtype=float)
    Ce = np.vstack([C, np.ones(C.shape[1])])
    sv = np.linalg.svd(Ce, compute_uv=False)
    if Ce.shape[1] < 4 or not sv[-1] > 1e-10 * sv[0]:
        raise TopologyError(
            "extended topology [C; 1^T] is rank deficient (sensors coplanar or too few)")
    S = classical_ls(wm)
    Qe = np.linalg.solve(Ce @ Ce.T, Ce @ S.T).T
    return PoseEstimate(Qe[:, :3], Qe[:, 3], "ls")


def solve_opp(Cbar, Dcheck) -> np.ndarray:
    """Orthogonal Procrustes: ``argmin ||Q Cbar - Dcheck||_F`` over ``Q^T Q = I``.

    With ``Cbar Dcheck^T = U S V^T`` the minimiser is ``V U^T``. The
    determinant is not forced to +1.
    """
    Mx = np.asarray(Cbar, dtype=float) @ np.asarray(Dcheck, dtype=float).T
    U, sv, Vt = np.linalg.svd(Mx)
    if not sv[-1] > OPP_RTOL * max(sv[0], np.finfo(float).tiny):
        raise NonUniqueSolutionError(
            f"Cbar Dcheck^T is singular (singular values {sv}); rotation is not unique")
    # Sign convention: largest-magnitude entry of each left singular vector positive.
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(3)])
    signs[signs == 0] = 1.0
    U = U * signs
    V = Vt.T * signs
    return V @ U.T


def _translation(wm: WhitenedModel, Q, C):
    S = classical_ls(wm)
    return (S - Q @ np.asarray(C, dtype=float)).mean(axis=1)


def _suc(cm: CenteredModel, wm: WhitenedModel, C, method: str) -> PoseEstimate:
    Dcheck, *_ = np.linalg.lstsq(wm.Abar, cm.Dtil, rcond=None)
    Q = solve_opp(cm.Cbar, Dcheck)
    return PoseEstimate(Q, _translation(wm, Q, C), method)


def suc_ls(cm: CenteredModel, wm: WhitenedModel, C) -> PoseEstimate:
    """Simplified unitarily constrained LS: Procrustes fit to ``Abar^+ Dtil``."""
    return _suc(cm, wm, C, "suc-ls")


def suc_tls(cm: CenteredModel, wm: WhitenedModel, C) -> PoseEstimate:
    """Simplified constrained TLS; its minimiser coincides with :func:`suc_ls`."""
    return _suc(cm, wm, C, "suc-tls")


def _ouc(problem, cm, wm, C, settings, method, init):
    Q0 = None
    if init == "suc-ls":
        Q0 = suc_ls(cm, wm, C).rotation
    elif init != "constrained-ls":
        raise ConfigurationError(f"unknown initialiser {init!r}")
    res = solve_wopp(problem, settings, Q0=Q0)
    return PoseEstimate(res.rotation, _translation(wm, res.rotation, C), method,
                        iterations=res.iterations, converged=res.converged)


def ouc_ls(cm: CenteredModel, wm: WhitenedModel, C,
           settings: NewtonSettings | None = None,
           init: str = "constrained-ls") -> PoseEstimate:
    """Optimal unitarily constrained LS via Newton's method on ``||Abar Q Cbar - Dtil||``.

    ``init="suc-ls"`` starts from the SUC-LS rotation instead of the
    norm-constrained LS fit; it exists only for diagnosing that start.
    """
    problem = WoppProblem.from_matrices(wm.Abar, cm.Cbar, cm.Dtil)
    return _ouc(problem, cm, wm, C, settings, "ouc-ls", init)


def tls_weighting(Abar) -> np.ndarray:
    """``(Abar Abar^T + I)^{-1/2}`` as a symmetric positive definite matrix."""
    Abar = np.asarray(Abar, dtype=float)
    lam, V = np.linalg.eigh(Abar @ Abar.T + np.eye(Abar.shape[0]))
    return (V / np.sqrt(lam)) @ V.T


def ouc_tls(cm: CenteredModel, wm: WhitenedModel, C,
            settings: NewtonSettings | None = None,
            init: str = "constrained-ls") -> PoseEstimate:
    """Optimal constrained TLS: the Newton solver on the ``Lambda^{-1/2}``-weighted problem."""
    L = tls_weighting(wm.Abar)
    problem = WoppProblem.from_matrices(L @ wm.Abar, cm.Cbar, L @ cm.Dtil)
    return _ouc(problem, cm, wm, C, settings, "ouc-tls", init)


def ta_localization(est: PoseEstimate, C) -> np.ndarray:
    """Topology-aware sensor positions ``Q C + t 1^T`` from a pose estimate."""
    return est.rotation @ np.asarray(C, dtype=float) + est.translation[:, None]


def estimate(method: str, wm: WhitenedModel, C, cm: CenteredModel | None = None,
             settings: NewtonSettings | None = None) -> PoseEstimate:
    """Dispatch on a method tag from :data:`METHODS`."""
    if method == "ls":
        return unconstrained_ls(wm, C)
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; expected one of {METHODS}")
    if cm is None:
        cm = center_model(wm, C)
    if method == "suc-ls":
        return suc_ls(cm, wm, C)
    if method == "suc-tls":
        return suc_tls(cm, wm, C)
    if method == "ouc-ls":
        return ouc_ls(cm, wm, C, settings)
    return ouc_tls(cm, wm, C, settings)
