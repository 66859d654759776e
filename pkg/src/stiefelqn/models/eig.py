"""Two-cost linear eigenvalue problem: min 1/2 tr(X^T (A + B) X) on St(n, p).

A is cheap to apply, B is expensive. Counters tally A and B applications.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from ..kernels import pinv_small, qr_orth, sym_eig
from ..quasinewton import NystromOperator, nystrom_build
from .base import ApplyCounter, SplitObjective, rng_stream

# cost weight the random benchmark assigns to one B application
RANDOM_B_REPEATS = 19


@dataclass
class EigProblem:
    A: object
    B: np.ndarray
    p: int
    counter: ApplyCounter = field(default_factory=ApplyCounter)
    b_cost_weight: int = 1
    name: str = "eig"

    @property
    def n(self):
        return self.A.shape[0]

    def A_apply(self, U):
        self.counter.add_cheap(U.shape[1])
        return np.asarray(self.A @ U)

    def B_apply(self, U):
        self.counter.add_expensive(U.shape[1])
        return self.B @ U

    def C_apply(self, U):
        return self.A_apply(U) + self.B_apply(U)

    def dense_C(self):
        A = self.A.toarray() if scipy.sparse.issparse(self.A) else np.asarray(self.A)
        return A + self.B

    def exact_eigs(self, k=None):
        """Dense ground truth: the k smallest eigenpairs of A + B."""
        w, V = sym_eig(self.dense_C())
        k = self.p if k is None else k
        return w[:k], V[:, :k]

    def initial_point(self, seed=0):
        rng = rng_stream(seed, "eig-x0")
        return qr_orth(rng.standard_normal((self.n, self.p)))


def _negative_b(n, rng):
    B = 0.01 * rng.random((n, n))
    B = 0.5 * (B + B.T)
    lmin = np.linalg.eigvalsh(B)[0]
    B = B - lmin * np.eye(n)
    return -B


def make_eig_random(n, p, seed=0):
    """Dense random instance: symmetric Gaussian A, negative semidefinite B.

    B is charged at ``RANDOM_B_REPEATS`` times the cost of a plain product
    in ``b_cost_weight``; the counters themselves count each block once.
    """
    if not n >= p >= 1:
        raise ValueError(f"need n >= p >= 1, got n={n}, p={p}")
    A = rng_stream(seed, "eig-A").standard_normal((n, n))
    A = 0.5 * (A + A.T)
    B = _negative_b(n, rng_stream(seed, "eig-B"))
    return EigProblem(A=A, B=B, p=p, b_cost_weight=RANDOM_B_REPEATS, name=f"eig_random(n={n})")


def wathen(nx, ny, rng):
    """Sparse SPD finite-element mass matrix on an nx-by-ny grid of
    8-node serendipity elements with random element densities."""
    e1 = np.array([[6, -6, 2, -8], [-6, 32, -6, 20], [2, -6, 6, -6], [-8, 20, -6, 32]], float)
    e2 = np.array([[3, -8, 2, -6], [-8, 16, -8, 20], [2, -8, 3, -8], [-6, 20, -8, 16]], float)
    e = np.block([[e1, e2], [e2.T, e1]]) / 45.0
    n = 3 * nx * ny + 2 * nx + 2 * ny + 1
    rho = 100.0 * rng.random((nx, ny))
    rows, cols, vals = [], [], []
    for j in range(1, ny + 1):
        for i in range(1, nx + 1):
            nn = np.empty(8, dtype=int)
            nn[0] = 3 * j * nx + 2 * i + 2 * j + 1
            nn[1] = nn[0] - 1
            nn[2] = nn[1] - 1
            nn[3] = (3 * j - 1) * nx + 2 * j + i - 1
            nn[4] = 3 * (j - 1) * nx + 2 * i + 2 * j - 3
            nn[5] = nn[4] + 1
            nn[6] = nn[5] + 1
            nn[7] = nn[3] + 1
            nn -= 1
            rows.append(np.repeat(nn, 8))
            cols.append(np.tile(nn, 8))
            vals.append((e * rho[i - 1, j - 1]).ravel())
    A = scipy.sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def make_eig_wathen_like(s, p=10, seed=0):
    """Sparse instance: Wathen-pattern A on a 5s-by-5s grid, dense B as in
    :func:`make_eig_random`, without the extra cost weight on B."""
    A = wathen(5 * s, 5 * s, rng_stream(seed, "wathen-A"))
    n = A.shape[0]
    if p > n:
        raise ValueError(f"p={p} exceeds n={n}")
    B = _negative_b(n, rng_stream(seed, "eig-B"))
    return EigProblem(A=A, B=B, p=p, name=f"eig_wathen(s={s})")


def make_eig_from_matrices(A, B, p, name="eig_mm"):
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError("A and B must be square and of equal size")
    B = B.toarray() if scipy.sparse.issparse(B) else np.asarray(B, dtype=float)
    return EigProblem(A=A, B=B, p=p, name=name)


def eig_objective(prob):
    """f(X) = 1/2 <X, (A + B) X> with H^c = A and H^e = B."""

    def value_and_grad(X):
        G = prob.A_apply(X) + prob.B_apply(X)
        return 0.5 * float(np.vdot(X, G)), G

    return SplitObjective(
        value_and_grad,
        hc_apply=lambda X, U: prob.A_apply(U),
        he_apply=lambda X, U: prob.B_apply(U),
        e0_apply=lambda X, U: prob.B_apply(U),
        e0_nystrom=True,
        hamiltonian_apply=lambda X, U: prob.C_apply(U),
        counter=prob.counter,
        name=prob.name,
    )


def ritz_rotate(X, CX):
    """Rotate X (and CX) to the Ritz basis of the projected matrix X^T C X."""
    H = X.T @ CX
    mu, V = np.linalg.eigh(0.5 * (H + H.T))
    return mu, X @ V, CX @ V


def eig_residual_err(C_apply, X, CX=None):
    """max_i ||C x_i - mu_i x_i|| / max(1, |mu_i|) over the Ritz pairs of X."""
    if CX is None:
        CX = C_apply(X)
    mu, Xr, CXr = ritz_rotate(X, CX)
    R = CXr - Xr * mu
    return float(np.max(np.linalg.norm(R, axis=0) / np.maximum(1.0, np.abs(mu))))


def _orth_pair(X_prev, X_cur, BX_prev, BX_cur, drop_tol=1e-8):
    """Orthonormal basis of span{X_cur, X_prev} plus its image under B, built
    from the cached products alone."""
    c = X_cur.T @ X_prev
    R = X_prev - X_cur @ c
    WR = BX_prev - BX_cur @ c
    c2 = X_cur.T @ R
    R = R - X_cur @ c2
    WR = WR - BX_cur @ c2
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    keep = s > drop_tol
    T = Vt[keep].T / s[keep]
    O = np.hstack([X_cur, R @ T])
    W = np.hstack([BX_cur, WR @ T])
    return O, W


def build_bhat(prob, X_prev, X_cur, mode="asqn", BX_prev=None, BX_cur=None):
    """Nystrom approximation of B on span{X_prev, X_cur} ("asqn") or span{X_cur} ("ace").

    When the products B X_prev and B X_cur are passed in (they are available
    from residual evaluations) no new B application is made. Otherwise B is
    applied once to the orthonormal basis and counted.
    """
    if mode not in ("asqn", "ace"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "ace" or X_prev is None:
        if BX_cur is not None:
            # X_cur is orthonormal, so it is already a basis of its span
            return nystrom_build(None, X_cur, W=BX_cur)
        return nystrom_build(prob.B_apply, X_cur)
    if BX_prev is not None and BX_cur is not None:
        O, W = _orth_pair(X_prev, X_cur, BX_prev, BX_cur)
        return nystrom_build(None, O, W=W)
    return nystrom_build(prob.B_apply, np.hstack([X_prev, X_cur]))
