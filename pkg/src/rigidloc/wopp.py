"""Newton's method for the weighted orthogonal Procrustes problem.

Minimises ``||f(Q) - b||^2`` over 3x3 orthogonal ``Q`` where
``f(Q) = vec(Aw Q Cbar)`` is linear. Iterates are kept on the manifold by
the update ``Q <- Q exp(X(gamma x))`` with the skew map of
:func:`rigidloc.geometry.skew`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import GeometryError
from .geometry import nearest_orthogonal, rotation_exp, skew

__all__ = [
    "NewtonSettings",
    "WoppProblem",
    "WoppResult",
    "GENERATORS",
    "SECOND_ORDER_TERMS",
    "wopp_residual",
    "wopp_jacobian",
    "wopp_hessian",
    "wopp_step",
    "wopp_linesearch",
    "wopp_init",
    "norm_constrained_fit",
    "solve_wopp",
]

_E = np.eye(3)


def _outer(i, j):
    return np.outer(_E[i], _E[j])


# dX/dx_k for x = (x1, x2, x3): the (2,1), (3,1), (3,2) generators.
GENERATORS = np.stack([_outer(1, 0) - _outer(0, 1),
                       _outer(2, 0) - _outer(0, 2),
                       _outer(2, 1) - _outer(1, 2)])

# X(x)^2 = sum_{i<=j} x_i x_j T_ij, keyed by zero-based (i, j).
SECOND_ORDER_TERMS = {
    (0, 0): -(_outer(0, 0) + _outer(1, 1)),
    (0, 1): -(_outer(2, 1) + _outer(1, 2)),
    (0, 2): _outer(2, 0) + _outer(0, 2),
    (1, 1): -(_outer(0, 0) + _outer(2, 2)),
    (1, 2): -(_outer(1, 0) + _outer(0, 1)),
    (2, 2): -(_outer(1, 1) + _outer(2, 2)),
}
_T_KEYS = list(SECOND_ORDER_TERMS)
_T_STACK = np.stack([SECOND_ORDER_TERMS[k] for k in _T_KEYS])


@dataclass(frozen=True)
class NewtonSettings:
    epsilon: float = 1e-6
    max_iterations: int = 50
    linesearch_grid: int = 20
    golden_iterations: int = 20
    # A gradient below gradient_floor * ||J||_F * ||b|| counts as stationary;
    # the scale-free stopping ratio cannot resolve an exact fit.
    gradient_floor: float = 1e-12

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.linesearch_grid < 1:
            raise ValueError("linesearch_grid must be at least 1")


@dataclass(frozen=True)
class WoppProblem:
    """``min ||vec(Aw Q Cbar) - b||`` over orthogonal Q; ``b`` is ``vec`` of a PxL matrix."""

    Aw: np.ndarray
    Cbar: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Aw = np.asarray(self.Aw, dtype=float)
        Cbar = np.asarray(self.Cbar, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if Aw.shape[1] != 3 or Cbar.shape[0] != 3:
            raise ValueError("Aw must be Px3 and Cbar 3xL")
        if b.size != Aw.shape[0] * Cbar.shape[1]:
            raise ValueError(f"b has {b.size} entries, expected {Aw.shape[0] * Cbar.shape[1]}")
        object.__setattr__(self, "Aw", Aw)
        object.__setattr__(self, "Cbar", Cbar)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_matrices(cls, Aw, Cbar, B):
        """Build from the target matrix ``B`` (PxL) instead of its vectorisation."""
        return cls(Aw, Cbar, np.asarray(B, dtype=float).T.reshape(-1))

    def f(self, Q) -> np.ndarray:
        """``vec(Aw Q Cbar)``; ``Q`` may also be a stack of 3x3 matrices."""
        Y = self.Aw @ np.asarray(Q) @ self.Cbar
        if Y.ndim == 2:
            return Y.T.reshape(-1)
        return Y.transpose(0, 2, 1).reshape(Y.shape[0], -1)

    def objective(self, Q) -> float:
        r = self.f(Q) - self.b
        return float(r @ r)


@dataclass
class WoppResult:
    rotation: np.ndarray
    iterations: int
    converged: bool
    objective: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    init_fallback: bool = False


def wopp_residual(problem: WoppProblem, Q) -> np.ndarray:
    return problem.f(Q) - problem.b


def wopp_jacobian(problem: WoppProblem, Qbreve) -> np.ndarray:
    """Kx3 Jacobian of ``x -> f(Qbreve exp(X(x)))`` at ``x = 0``."""
    return problem.f(np.asarray(Qbreve) @ GENERATORS).T


def wopp_hessian(problem: WoppProblem, Qbreve, residual) -> np.ndarray:
    """Second-order correction ``H`` such that the full Hessian is ``J^T J + H``.

    Built from ``h_ij = f(Qbreve T_ij)``: diagonal entries ``w^T h_ii`` and
    off-diagonal entries ``w^T h_ij / 2``.
    """
    h = problem.f(np.asarray(Qbreve) @ _T_STACK) @ np.asarray(residual)
    H = np.empty((3, 3))
    for (i, j), val in zip(_T_KEYS, h):
        if i == j:
            H[i, i] = val
        else:
            H[i, j] = H[j, i] = 0.5 * val
    return H


def _newton_direction(J, w, H):
    JtJ = J.T @ J
    g = J.T @ w
    sv = np.linalg.svd(JtJ, compute_uv=False)
    if not sv[-1] > 1e-14 * sv[0]:
        raise GeometryError(f"Gauss-Newton matrix is singular (singular values {sv})")
    try:
        L = np.linalg.cholesky(JtJ + H)
    except np.linalg.LinAlgError:
        return -np.linalg.solve(JtJ, g), "gauss-newton"
    return -np.linalg.solve(L.T, np.linalg.solve(L, g)), "newton"


def wopp_step(problem: WoppProblem, Qbreve, settings: NewtonSettings | None = None):
    """Descent direction at ``Qbreve`` and the branch that produced it.

    The Newton step is used when ``J^T J + H`` admits a Cholesky factor,
    otherwise the Gauss-Newton step ``-J^+ w``.
    """
    w = wopp_residual(problem, Qbreve)
    J = wopp_jacobian(problem, Qbreve)
    H = wopp_hessian(problem, Qbreve, w)
    return _newton_direction(J, w, H)


def _path_terms(problem, Qbreve, direction):
    """Residual along ``Qbreve exp(gamma X)`` as ``w + sin(g a) p + (1 - cos(g a)) q``."""
    X = skew(direction)
    angle = float(np.linalg.norm(direction))
    Q = np.asarray(Qbreve)
    w = problem.f(Q) - problem.b
    p = problem.f(Q @ X) / angle
    q = problem.f(Q @ X @ X) / angle**2
    return w, p, q, angle


def _path_objective(gammas, w, p, q, angle):
    g = np.atleast_1d(gammas)[:, None] * angle
    r = w + np.sin(g) * p + (1.0 - np.cos(g)) * q
    return np.einsum("ij,ij->i", r, r)


def wopp_linesearch(problem: WoppProblem, Qbreve, direction,
                    settings: NewtonSettings | None = None) -> float:
    """Step length in (0, 1] minimising the objective along the geodesic.

    A uniform grid locates the basin, golden-section search refines it and
    the best evaluated point wins. If no point beats the current objective
    the step is halved until it does.
    """
    settings = settings or NewtonSettings()
    direction = np.asarray(direction, dtype=float)
    if not np.all(np.isfinite(direction)) or not np.linalg.norm(direction) > 0:
        return 1.0
    w, p, q, angle = _path_terms(problem, Qbreve, direction)
    current = float(w @ w)

    n = settings.linesearch_grid
    grid = np.arange(1, n + 1) / n
    values = _path_objective(grid, w, p, q, angle)
    k = int(np.argmin(values))
    best_gamma, best_val = grid[k], values[k]

    lo = grid[k - 1] if k > 0 else 0.0
    hi = grid[min(k + 1, n - 1)]
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - ratio * (hi - lo), lo + ratio * (hi - lo)
    f1, f2 = _path_objective([x1, x2], w, p, q, angle)
    for _ in range(settings.golden_iterations):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - ratio * (hi - lo)
            f1 = _path_objective(x1, w, p, q, angle)[0]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + ratio * (hi - lo)
            f2 = _path_objective(x2, w, p, q, angle)[0]
        for g, v in ((x1, f1), (x2, f2)):
            if 0 < g <= 1 and v < best_val:
                best_gamma, best_val = g, v

    gamma = float(best_gamma)
    while best_val > current and gamma > 1e-12:
        gamma *= 0.5
        best_val = _path_objective(gamma, w, p, q, angle)[0]
    return gamma


def norm_constrained_fit(problem: WoppProblem):
    """Solve ``min ||f(Q) - b||`` subject to ``||vec Q|| = sqrt(3)`` (no orthogonality).

    The multiplier solves the secular equation
    ``sum c_i^2 / (l_i + lam)^2 = 3`` on ``lam > -l_min``, where ``l_i`` and
    ``c`` come from the eigendecomposition of the 9x9 normal matrix.
    Returns None for a singular normal matrix or the hard case.
    """
    Aw, Cbar = problem.Aw, problem.Cbar
    normal = np.kron(Cbar @ Cbar.T, Aw.T @ Aw)
    B = problem.b.reshape(Cbar.shape[1], Aw.shape[0]).T
    rhs = (Aw.T @ B @ Cbar.T).T.reshape(-1)
    lam, V = np.linalg.eigh(normal)
    if not lam[0] > 1e-12 * lam[-1]:
        return None
    c = V.T @ rhs
    target = 3.0
    shifted = lam - lam[0]

    def secular(mu):
        return np.sum((c / (shifted + mu)) ** 2) - target

    # Bracket: the leading term alone reaches 3 at lo; the whole sum is below 3 at hi.
    lo = abs(c[0]) / np.sqrt(target)
    hi = np.linalg.norm(c) / np.sqrt(target)
    if not lo > 0:
        # "Hard case": no component along the weakest direction.
        return None
    if secular(hi) >= 0:
        mu = hi
    else:
        mu = brentq(secular, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    q = V @ (c / (shifted + mu))
    return q.reshape(3, 3, order="F")


def _constrained_ls_init(problem: WoppProblem):
    """Polar factor of :func:`norm_constrained_fit`; returns ``(Q0, ok)``."""
    Qcheck = norm_constrained_fit(problem)
    if Qcheck is None:
        return np.eye(3), False
    try:
        return nearest_orthogonal(Qcheck), True
    except ValueError:
        return np.eye(3), False


def wopp_init(problem: WoppProblem) -> np.ndarray:
    """Initial rotation from the norm-constrained LS fit (identity on failure, with a warning)."""
    Q0, ok = _constrained_ls_init(problem)
    if not ok:
        warnings.warn("norm-constrained initialisation failed; starting from identity",
                      RuntimeWarning, stacklevel=2)
    return Q0


def _stopping_ratio(J, w, floor):
    """``||J^T w|| / (||J||_F ||w||)``, or 0 once the gradient is at round-off level."""
    grad = np.linalg.norm(J.T @ w)
    normJ = np.linalg.norm(J)
    if grad <= floor * normJ:
        return 0.0
    return float(grad / (normJ * np.linalg.norm(w)))


def solve_wopp(problem: WoppProblem, settings: NewtonSettings | None = None,
               Q0=None) -> WoppResult:
    """Run Newton/Gauss-Newton iterations with exact geodesic line search.

    Iterates until ``||J^T w|| / (||J||_F ||w||) <= epsilon`` or the
    iteration cap is hit; ``converged`` tells the two apart.
    """
    settings = settings or NewtonSettings()
    fallback = False
    if Q0 is None:
        Q0, ok = _constrained_ls_init(problem)
        fallback = not ok
    Q = np.array(Q0, dtype=float)
    floor = settings.gradient_floor * np.linalg.norm(problem.b)

    w = wopp_residual(problem, Q)
    J = wopp_jacobian(problem, Q)
    history = [float(w @ w)]
    steps = []
    ratio = settings.epsilon + 1.0
    i = 0
    while ratio > settings.epsilon and i < settings.max_iterations:
        H = wopp_hessian(problem, Q, w)
        x, kind = _newton_direction(J, w, H)
        gamma = wopp_linesearch(problem, Q, x, settings)
        Q = Q @ rotation_exp(gamma * x)
        i += 1
        w = wopp_residual(problem, Q)
        J = wopp_jacobian(problem, Q)
        history.append(float(w @ w))
        steps.append(kind)
        ratio = _stopping_ratio(J, w, floor)
    return WoppResult(rotation=Q, iterations=i, converged=ratio <= settings.epsilon,
                      objective=history, steps=steps, init_fallback=fallback)
