import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigidloc.errors import GeometryError
from rigidloc.geometry import orthogonality_error, rotation_exp, skew
from rigidloc.wopp import (
    GENERATORS,
    SECOND_ORDER_TERMS,
    NewtonSettings,
    WoppProblem,
    norm_constrained_fit,
    solve_wopp,
    wopp_hessian,
    wopp_init,
    wopp_jacobian,
    wopp_linesearch,
    wopp_residual,
    wopp_step,
)

from conftest import random_rotation


def random_problem(rng, noise=1.0):
    P, L = rng.integers(3, 7), rng.integers(3, 10)
    Aw = rng.standard_normal((P, 3))
    Cbar = rng.standard_normal((3, L))
    Q = random_rotation(rng)
    B = Aw @ Q @ Cbar + noise * rng.standard_normal((P, L))
    return WoppProblem.from_matrices(Aw, Cbar, B), Q


def objective_half(problem, Q, x):
    r = wopp_residual(problem, Q @ rotation_exp(x))
    return 0.5 * r @ r


def fd_jacobian(problem, Q, h=1e-6):
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        cols.append((problem.f(Q @ rotation_exp(e)) - problem.f(Q @ rotation_exp(-e))) / (2 * h))
    return np.column_stack(cols)


def fd_hessian(problem, Q, h=1e-3):
    H = np.empty((3, 3))
    E = np.eye(3) * h
    for i, j in itertools.product(range(3), repeat=2):
        H[i, j] = (objective_half(problem, Q, E[i] + E[j]) - objective_half(problem, Q, E[i] - E[j])
                   - objective_half(problem, Q, -E[i] + E[j]) + objective_half(problem, Q, -E[i] - E[j])) / (4 * h * h)
    return H


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_residual_examples():
    rng = np.random.default_rng(0)
    Aw, Cbar, Q = rng.standard_normal((4, 3)), rng.standard_normal((3, 5)), random_rotation(rng)
    p = WoppProblem.from_matrices(Aw, Cbar, Aw @ Q @ Cbar)
    assert np.allclose(wopp_residual(p, Q), 0.0, atol=1e-13)
    assert np.array_equal(wopp_residual(p, np.zeros((3, 3))), -p.b)
    Q2 = random_rotation(rng)
    Y = Aw @ Q2 @ Cbar
    loop = [Y[i, j] for j in range(5) for i in range(4)]  # column-major vec
    assert np.allclose(wopp_residual(p, Q2), np.array(loop) - p.b, atol=1e-13)


def test_problem_validation():
    with pytest.raises(ValueError):
        WoppProblem(np.ones((3, 2)), np.ones((3, 4)), np.ones(12))
    with pytest.raises(ValueError):
        WoppProblem(np.ones((3, 3)), np.ones((3, 4)), np.ones(11))


def test_second_order_terms_expand_square():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.standard_normal(3)
        expansion = sum(x[i] * x[j] * T for (i, j), T in SECOND_ORDER_TERMS.items())
        assert np.allclose(skew(x) @ skew(x), expansion, atol=1e-13)
        assert np.allclose(skew(x), np.tensordot(x, GENERATORS, axes=1), atol=0)


def test_jacobian_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p, _ = random_problem(rng)
        Q = random_rotation(rng)
        assert rel(wopp_jacobian(p, Q), fd_jacobian(p, Q)) < 1e-4


def test_jacobian_forward_difference_columns():
    rng = np.random.default_rng(3)
    p, _ = random_problem(rng)
    Q = random_rotation(rng)
    J, h = wopp_jacobian(p, Q), 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        col = (p.f(Q @ rotation_exp(e)) - p.f(Q)) / h
        assert rel(J[:, k], col) < 1e-4


def test_jacobian_zero_and_linear():
    rng = np.random.default_rng(4)
    p, _ = random_problem(rng)
    Q = random_rotation(rng)
    zero = WoppProblem(p.Aw, np.zeros_like(p.Cbar), p.b)
    assert np.array_equal(wopp_jacobian(zero, Q), np.zeros((p.b.size, 3)))
    scaled = WoppProblem(2.5 * p.Aw, p.Cbar, p.b)
    assert np.allclose(wopp_jacobian(scaled, Q), 2.5 * wopp_jacobian(p, Q), rtol=1e-14)


def test_hessian_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p, _ = random_problem(rng, noise=3.0)
        Q = random_rotation(rng)
        J = wopp_jacobian(p, Q)
        H = wopp_hessian(p, Q, wopp_residual(p, Q))
        assert np.array_equal(H, H.T)
        assert rel(H, fd_hessian(p, Q) - J.T @ J) < 1e-3


def test_hessian_zero_residual():
    rng = np.random.default_rng(6)
    p, _ = random_problem(rng)
    assert np.array_equal(wopp_hessian(p, np.eye(3), np.zeros(p.b.size)), np.zeros((3, 3)))


def test_step_zero_residual():
    rng = np.random.default_rng(7)
    p, Q = random_problem(rng, noise=0.0)
    x, kind = wopp_step(p, Q)
    assert np.allclose(x, 0.0, atol=1e-12)
    assert kind in ("newton", "gauss-newton")


def test_step_newton_equals_gauss_newton_without_curvature():
    rng = np.random.default_rng(8)
    p, Q = random_problem(rng, noise=0.0)
    Qoff = Q @ rotation_exp([0.01, -0.02, 0.015])
    w = wopp_residual(p, Qoff)
    J = wopp_jacobian(p, Qoff)
    # With H = 0 both branches solve J^T J x = -J^T w.
    x_newton = -np.linalg.solve(J.T @ J + np.zeros((3, 3)), J.T @ w)
    x_gn = -np.linalg.lstsq(J, w, rcond=None)[0]
    assert np.allclose(x_newton, x_gn, atol=1e-12)


def test_step_is_descent():
    rng = np.random.default_rng(9)
    for _ in range(20):
        p, Q = random_problem(rng, noise=0.0)
        Qoff = Q @ rotation_exp(0.05 * rng.standard_normal(3))
        x, kind = wopp_step(p, Qoff)
        assert kind == "newton"
        before = np.linalg.norm(wopp_residual(p, Qoff))
        assert np.linalg.norm(wopp_residual(p, Qoff @ rotation_exp(x))) < before


def test_step_singular_gauss_newton_matrix():
    p = WoppProblem(np.ones((3, 3)), np.eye(3), np.ones(9))
    with pytest.raises(GeometryError):
        wopp_step(p, np.eye(3))


def test_linesearch_zero_direction():
    rng = np.random.default_rng(10)
    p, Q = random_problem(rng)
    assert wopp_linesearch(p, Q, np.zeros(3)) == 1.0


def test_linesearch_full_step_near_solution():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p, Q = random_problem(rng, noise=0.0)
        Qoff = Q @ rotation_exp(0.01 * rng.standard_normal(3))
        x, _ = wopp_step(p, Qoff)
        assert wopp_linesearch(p, Qoff, x) == pytest.approx(1.0, abs=0.05)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_linesearch_never_increases(seed):
    rng = np.random.default_rng(seed)
    p, _ = random_problem(rng, noise=2.0)
    Q = random_rotation(rng)
    x = rng.standard_normal(3)
    gamma = wopp_linesearch(p, Q, x)
    assert 0 < gamma <= 1
    # Uphill directions shrink the step to ~1e-12, where the path formula and
    # the direct objective differ by round-off.
    assert p.objective(Q @ rotation_exp(gamma * x)) <= p.objective(Q) * (1 + 1e-10)
    # No better point on the sampled grid.
    grid = np.arange(1, 21) / 20
    best = min(p.objective(Q @ rotation_exp(g * x)) for g in grid)
    assert p.objective(Q @ rotation_exp(gamma * x)) <= best * (1 + 1e-9) + 1e-12


def test_init_noiseless_recovers_rotation():
    rng = np.random.default_rng(12)
    for _ in range(10):
        p, Q = random_problem(rng, noise=0.0)
        assert np.allclose(wopp_init(p), Q, atol=1e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_init_constraint_active(seed):
    rng = np.random.default_rng(seed)
    p, _ = random_problem(rng, noise=rng.uniform(0, 5))
    Qcheck = norm_constrained_fit(p)
    if Qcheck is None:
        return
    assert np.linalg.norm(Qcheck) == pytest.approx(np.sqrt(3), abs=1e-10)
    Q0 = wopp_init(p)
    assert np.allclose(Q0.T @ Q0, np.eye(3), atol=1e-12)


def test_init_singular_normal_matrix_warns():
    p = WoppProblem(np.ones((3, 3)), np.eye(3), np.ones(9))
    with pytest.warns(RuntimeWarning):
        Q0 = wopp_init(p)
    assert np.array_equal(Q0, np.eye(3))


def test_solve_noiseless_two_iterations():
    rng = np.random.default_rng(13)
    for _ in range(20):
        p, Q = random_problem(rng, noise=0.0)
        res = solve_wopp(p)
        assert res.converged
        assert res.iterations <= 2
        assert np.allclose(res.rotation, Q, atol=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_solve_monotone_and_unitary(seed):
    rng = np.random.default_rng(seed)
    p, _ = random_problem(rng, noise=rng.uniform(0, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = solve_wopp(p)
    obj = np.array(res.objective)
    assert np.all(np.diff(obj) <= 1e-12 * obj[:-1] + 1e-300)
    assert orthogonality_error(res.rotation) < 1e-10
    assert len(res.steps) == res.iterations


def test_solve_respects_iteration_cap():
    rng = np.random.default_rng(14)
    p, _ = random_problem(rng, noise=3.0)
    res = solve_wopp(p, NewtonSettings(epsilon=1e-300, max_iterations=3))
    assert res.iterations == 3
    assert not res.converged


def test_settings_validation():
    with pytest.raises(ValueError):
        NewtonSettings(epsilon=0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iterations=0)
