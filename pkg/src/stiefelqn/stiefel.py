"""Geometry of the real Stiefel manifold St(n, p) = {X : X^T X = I_p}.

Points and tangent vectors are plain ``ndarray`` objects of shape (n, p);
:func:`check_point` and :func:`check_tangent` enforce the invariants where a
caller wants them enforced.
"""

import numpy as np
import scipy.linalg

from .kernels import qr_orth

FEAS_TOL = 1e-10


def sym(A):
    """Symmetric part (A + A^T) / 2 of a square matrix."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"sym needs a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def feasibility(X):
    """||X^T X - I||_F."""
    return float(np.linalg.norm(X.T @ X - np.eye(X.shape[1])))


def check_point(X, tol=FEAS_TOL, repair=False):
    """Validate ``X`` as a Stiefel point.

    With ``repair`` a drifted point is pulled back with one orthonormalization
    pass instead of raising.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] > X.shape[0]:
        raise ValueError(f"not an n x p matrix with p <= n: shape {X.shape}")
    if feasibility(X) <= tol:
        return X
    if not repair:
        raise ValueError(f"point is off the manifold: ||X^T X - I|| = {feasibility(X):.3e}")
    return _orthonormalize(X)


def check_tangent(X, xi, tol=FEAS_TOL):
    """Raise unless ``sym(X^T xi)`` vanishes to ``tol * max(1, ||xi||)``."""
    if xi.shape != X.shape:
        raise ValueError(f"shape mismatch: {xi.shape} vs {X.shape}")
    err = np.linalg.norm(sym(X.T @ xi))
    if err > tol * max(1.0, np.linalg.norm(xi)):
        raise ValueError(f"not a tangent vector: ||sym(X^T xi)|| = {err:.3e}")
    return xi


def _orthonormalize(Y):
    Q, R = scipy.linalg.qr(Y, mode="economic")
    d = np.diag(R)
    if np.min(np.abs(d)) <= Y.shape[0] * np.finfo(float).eps * np.max(np.abs(d)):
        raise ValueError("rank-deficient matrix cannot be retracted")
    return Q * np.where(d < 0, -1.0, 1.0)


def random_point(n, p, rng):
    """A random point on St(n, p), Q factor of a Gaussian matrix."""
    return _orthonormalize(rng.standard_normal((n, p)))


def proj_tangent(X, Z):
    """Orthogonal projection Z - X sym(X^T Z) onto the tangent space at X."""
    if Z.shape != X.shape:
        raise ValueError(f"shape mismatch: {Z.shape} vs {X.shape}")
    return Z - X @ sym(X.T @ Z)


def retract_qr(X, xi):
    """QR retraction: the Q factor of X + xi with a positive diagonal in R."""
    if xi.shape != X.shape:
        raise ValueError(f"shape mismatch: {xi.shape} vs {X.shape}")
    Y = _orthonormalize(X + xi)
    if feasibility(Y) > FEAS_TOL:
        Y = _orthonormalize(Y)
    return Y


def riemannian_grad(X, G):
    """Riemannian gradient of f at X from its Euclidean gradient G."""
    return proj_tangent(X, G)


def riemannian_hess_apply(X, G, B_apply, xi, tau=0.0):
    """Regularized Riemannian Hessian of the quadratic model at X.

    Returns ``Proj_X(B[xi] - xi sym(X^T G)) + tau * xi``, where ``B_apply`` is
    the (approximate) Euclidean Hessian and ``G`` the Euclidean gradient.
    """
    if xi.shape != X.shape or G.shape != X.shape:
        raise ValueError("shape mismatch between X, G and xi")
    out = proj_tangent(X, B_apply(xi) - xi @ sym(X.T @ G))
    if tau:
        out = out + tau * xi
    return out


def dist_quad(X, Xk):
    """||X - Xk||_F^2."""
    return float(np.linalg.norm(X - Xk) ** 2)


def dist_cubic(X, Xk):
    """(2/3) ||X - Xk||_F^3."""
    return float(2.0 / 3.0 * np.linalg.norm(X - Xk) ** 3)


def dist_proj(X, Xk):
    """||X X^T - Xk Xk^T||_F^2 evaluated as 2p - 2 ||X^T Xk||_F^2.

    Only valid for feasible X and Xk; invariant under X -> XQ.
    """
    p = X.shape[1]
    M = X.T @ Xk
    return float(max(2.0 * p - 2.0 * np.sum(M * M), 0.0))


def orth_basis(*blocks):
    """qr_orth of the horizontally stacked blocks, skipping ``None`` entries."""
    parts = [b for b in blocks if b is not None]
    return qr_orth(np.hstack(parts))
