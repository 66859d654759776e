import numpy as np
import pytest
from hypothesis import given, strategies as st

from stiefelqn import stiefel
from stiefelqn.kernels import qr_orth

from conftest import rand_sym

seeds = st.integers(0, 2**31)


def _point(seed, n=8, p=3):
    return stiefel.random_point(n, p, np.random.default_rng(seed))


@given(seeds)
def test_proj_tangent_lands_in_tangent_space_and_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    X = qr_orth(rng.standard_normal((6, 2)))
    Z = rng.standard_normal((6, 2))
    P = stiefel.proj_tangent(X, Z)
    assert np.linalg.norm(stiefel.sym(X.T @ P)) <= 1e-12
    assert np.linalg.norm(stiefel.proj_tangent(X, P) - P) <= 1e-12 * np.linalg.norm(Z)


@given(seeds)
def test_proj_is_orthogonal(seed):
    rng = np.random.default_rng(seed)
    X = _point(seed)
    Z, W = rng.standard_normal((2, 8, 3))
    assert np.vdot(stiefel.proj_tangent(X, Z), W) == pytest.approx(np.vdot(Z, stiefel.proj_tangent(X, W)), abs=1e-12)


@pytest.mark.parametrize("t", [0.0, 0.5, 2.0, -1.0])
def test_retract_closed_form(t):
    Y = stiefel.retract_qr(np.array([[1.0], [0.0]]), np.array([[0.0], [t]]))
    assert np.allclose(Y, np.array([[1.0], [t]]) / np.hypot(1.0, t), atol=1e-15)


@given(seeds, st.floats(0.01, 10.0))
def test_retraction_feasible(seed, scale):
    rng = np.random.default_rng(seed)
    X = _point(seed)
    xi = scale * stiefel.proj_tangent(X, rng.standard_normal(X.shape))
    assert stiefel.feasibility(stiefel.retract_qr(X, xi)) <= stiefel.FEAS_TOL


def test_retraction_first_order(rng):
    X = _point(5, 10, 3)
    xi = stiefel.proj_tangent(X, rng.standard_normal(X.shape))
    e = [np.linalg.norm(stiefel.retract_qr(X, t * xi) - X - t * xi) for t in (1e-3, 1e-4)]
    assert e[1] <= e[0] / 50


def test_check_point_and_tangent(rng):
    X = _point(1)
    assert stiefel.check_point(X) is not None
    with pytest.raises(ValueError):
        stiefel.check_point(2 * X)
    with pytest.raises(ValueError):
        stiefel.check_tangent(X, X)


def test_riemannian_grad_matches_fd_of_composition(rng):
    C = rand_sym(rng, 10)
    X = _point(2, 10, 3)
    g = stiefel.riemannian_grad(X, C @ X)
    f = lambda Y: 0.5 * np.vdot(Y, C @ Y)
    for _ in range(5):
        xi = stiefel.proj_tangent(X, rng.standard_normal(X.shape))
        h = 1e-5
        fd = (f(stiefel.retract_qr(X, h * xi)) - f(stiefel.retract_qr(X, -h * xi))) / (2 * h)
        assert fd == pytest.approx(np.vdot(g, xi), rel=1e-6)


def test_riemannian_hessian_fd(rng):
    C = rand_sym(rng, 10)
    X = _point(3, 10, 3)
    xi = stiefel.proj_tangent(X, rng.standard_normal(X.shape))
    H = stiefel.riemannian_hess_apply(X, C @ X, lambda U: C @ U, xi)
    h = 1e-5
    Yp, Ym = stiefel.retract_qr(X, h * xi), stiefel.retract_qr(X, -h * xi)
    fd = stiefel.proj_tangent(X, (stiefel.riemannian_grad(Yp, C @ Yp) - stiefel.riemannian_grad(Ym, C @ Ym)) / (2 * h))
    assert np.linalg.norm(H - fd) <= 1e-6 * np.linalg.norm(fd)
    # the tau shift is added verbatim
    H2 = stiefel.riemannian_hess_apply(X, C @ X, lambda U: C @ U, xi, tau=0.3)
    assert np.allclose(H2 - H, 0.3 * xi, atol=1e-14)


@given(seeds, st.integers(1, 4))
def test_dist_proj_identity(seed, p):
    rng = np.random.default_rng(seed)
    X = stiefel.random_point(9, p, rng)
    Y = stiefel.random_point(9, p, rng)
    direct = np.linalg.norm(X @ X.T - Y @ Y.T) ** 2
    assert abs(stiefel.dist_proj(X, Y) - direct) <= 1e-10
    Q = qr_orth(rng.standard_normal((p, p)))
    assert stiefel.dist_proj(X @ Q, Y) == pytest.approx(stiefel.dist_proj(X, Y), abs=1e-12)


def test_dist_proj_orthogonal_ranges():
    I = np.eye(7)
    assert stiefel.dist_proj(I[:, :3], I[:, 3:6]) == pytest.approx(6.0, abs=1e-14)
    assert stiefel.dist_proj(I[:, :3], I[:, :3]) == 0.0


def test_dist_quad_and_cubic(rng):
    X, Y = _point(1), _point(2)
    d = np.linalg.norm(X - Y)
    assert stiefel.dist_quad(X, Y) == pytest.approx(d ** 2)
    assert stiefel.dist_cubic(X, Y) == pytest.approx(2 / 3 * d ** 3)


def test_quadratic_regularizer_equals_linear_form_on_manifold(rng):
    # on feasible points ||X - Xk||^2 = 2p - 2 <X, Xk>
    X, Xk = _point(4), _point(5)
    assert stiefel.dist_quad(X, Xk) == pytest.approx(2 * 3 - 2 * np.vdot(X, Xk), abs=1e-12)
