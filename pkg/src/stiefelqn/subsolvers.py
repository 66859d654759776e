"""Inner solvers: truncated CG on a tangent space, Riemannian GBB, and LOBPCG."""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import EPS, inner, qr_orth
from .report import SolveReport
from .stiefel import proj_tangent, retract_qr, sym

CG_STATUSES = ("converged", "negative_curvature", "max_iter", "small_residual_progress")


@dataclass
class CgOutcome:
    step: np.ndarray
    status: str
    residual_norm: float
    iterations: int
    residual_history: list = field(default_factory=list)
    fallback: bool = False


def modified_cg(X, g, hess_apply, tol, max_iter=100, eps_curv=1e-12, c_dir=1e-6,
                stall_window=10, stall_tol=1e-3):
    """Approximately solve hess[xi] = -g on the tangent space at X.

    Truncated CG with every Krylov vector re-projected onto T_X. The
    iteration stops on a residual below ``tol``, on a direction of
    non-positive curvature, after ``max_iter`` steps, or when the last
    ``stall_window`` steps lowered the quadratic model by less than
    ``stall_tol`` relative to its value. The model decreases monotonically in
    exact arithmetic while the residual norm need not, so plateaus of the
    residual on ill-conditioned systems do not stop the iteration. The returned
    step always satisfies

        <g, xi> <= -c_dir * min(||g||^2, ||g|| ||xi||),

    falling back to ``-g`` otherwise.
    """
    gnorm = np.linalg.norm(g)
    if gnorm == 0.0:
        return CgOutcome(np.zeros_like(g), "converged", 0.0, 0, [0.0])
    xi = np.zeros_like(g)
    r = g.copy()
    d = -r
    rr = gnorm ** 2
    hist = [gnorm]
    q = [0.0]  # model value <g, xi> + 1/2 <H xi, xi> along the iterates
    status = "max_iter"
    it = 0
    while it < max_iter:
        it += 1
        Hd = proj_tangent(X, hess_apply(d))
        curv = inner(d, Hd)
        if curv <= eps_curv * inner(d, d):
            status = "negative_curvature"
            if not np.any(xi):
                xi = -g
            break
        alpha = rr / curv
        xi = xi + alpha * d
        q.append(q[-1] - 0.5 * alpha * rr)
        r = proj_tangent(X, r + alpha * Hd)
        rr_new = inner(r, r)
        hist.append(np.sqrt(rr_new))
        if hist[-1] <= tol:
            status = "converged"
            break
        if it >= stall_window and q[-1 - stall_window] - q[-1] <= stall_tol * abs(q[-1]):
            status = "small_residual_progress"
            break
        d = proj_tangent(X, -r + (rr_new / rr) * d)
        rr = rr_new
    fallback = False
    xnorm = np.linalg.norm(xi)
    if inner(g, xi) > -c_dir * min(gnorm ** 2, gnorm * xnorm) or not np.isfinite(xnorm):
        xi = -g
        fallback = True
    return CgOutcome(xi, status, hist[-1], it, hist, fallback)


def _counts(model):
    c = getattr(model, "counter", None)
    if c is None:
        return 0, 0
    return c.cheap, c.expensive


def gbb(model, X0, grad_tol=1e-6, max_iter=1000, step0=1e-2, rho=1e-4, eta=0.85,
        backtrack=0.5, max_backtracks=40, step_bounds=(1e-10, 1e10), callback=None):
    """Riemannian gradient descent with alternating BB steps.

    ``model`` needs ``value_and_grad(X) -> (f, euclidean_grad)``. The line
    search is nonmonotone: a trial point is accepted when

        f(X_t) <= C_k - rho * t * ||grad f(X_k)||^2 (+ round-off slack)

    where C_k is the Zhang-Hager weighted average with decay ``eta``. Every
    accepted (f_new, C_k, t, ||grad||^2) tuple is stored in
    ``report.extra["armijo"]``.
    """
    t0 = time.perf_counter()
    X = np.array(X0, dtype=float)
    f, G = model.value_and_grad(X)
    g = proj_tangent(X, G)
    gn = np.linalg.norm(g)
    rep = SolveReport(solver="gbb", f_history=[f], gradnorm_history=[gn])
    armijo = []
    C, Q, t = f, 1.0, step0
    status = "converged" if gn <= grad_tol else "max_iter"
    k = 0
    while status != "converged" and k < max_iter:
        accepted = False
        for _ in range(max_backtracks + 1):
            Xt = retract_qr(X, -t * g)
            ft, Gt = model.value_and_grad(Xt)
            slack = 10 * EPS * max(1.0, abs(C))
            if ft <= C - rho * t * gn ** 2 + slack:
                accepted = True
                break
            t *= backtrack
        if not accepted:
            status = "failed"
            break
        k += 1
        armijo.append((ft, C, t, gn ** 2))
        gt = proj_tangent(Xt, Gt)
        S = Xt - X
        Y = gt - g
        X, f, G, g = Xt, ft, Gt, gt
        gn = np.linalg.norm(g)
        rep.f_history.append(f)
        rep.gradnorm_history.append(gn)
        rep.accepted_flags.append(True)
        if callback is not None:
            callback(k, X, f, gn)
        if gn <= grad_tol:
            status = "converged"
            break
        sy = abs(inner(S, Y))
        if sy > 0:
            t = inner(S, S) / sy if k % 2 else sy / inner(Y, Y)
        else:
            t = step0
        t = float(np.clip(t, *step_bounds))
        Qn = eta * Q + 1.0
        C = (eta * Q * C + f) / Qn
        Q = Qn
    rep.status = status
    rep.outer_iterations = k
    rep.extra["armijo"] = armijo
    rep.cheap_applies, rep.expensive_applies = _counts(model)
    rep.wall_time = time.perf_counter() - t0
    return X, rep


def _orth_against(V, *bases):
    """Project V off the (orthonormal) bases twice, then orthonormalize."""
    for _ in range(2):
        for Bq in bases:
            if Bq is not None and Bq.shape[1]:
                V = V - Bq @ (Bq.T @ V)
    norms = np.linalg.norm(V, axis=0)
    keep = norms > 1e-14 * max(1.0, norms.max(initial=0.0))
    V = V[:, keep]
    if V.shape[1] == 0:
        return V
    V = V / np.linalg.norm(V, axis=0)
    try:
        Q = qr_orth(V)
    except ValueError:
        return V[:, :0]
    for Bq in bases:
        if Bq is not None and Bq.shape[1]:
            Q = Q - Bq @ (Bq.T @ Q)
    Q, _ = np.linalg.qr(Q)
    return Q


def _orth_tracked(P, AP, X, AX, rel_tol=1e-8):
    """Orthonormalize P against X and itself, carrying A P along linearly."""
    c = X.T @ P
    P = P - X @ c
    AP = AP - AX @ c
    c = X.T @ P
    P = P - X @ c
    AP = AP - AX @ c
    nrm = np.linalg.norm(P, axis=0)
    keep = nrm > 1e-14
    if not np.any(keep):
        return None, None
    P, AP = P[:, keep] / nrm[keep], AP[:, keep] / nrm[keep]
    U, s, Vt = np.linalg.svd(P, full_matrices=False)
    k = int(np.count_nonzero(s > rel_tol * s[0]))
    if k == 0:
        return None, None
    T = Vt[:k].T / s[:k]
    return P @ T, AP @ T


def lobpcg(op_apply, X0, p=None, tol=1e-8, max_iter=500, verify=True):
    """Smallest eigenpairs of a symmetric operator by block LOBPCG.

    Rayleigh-Ritz runs on span{X, P, W} with W the residuals of the columns
    that have not converged yet (soft locking). Only W is pushed through
    ``op_apply``; images of X and P are carried along linearly. Convergence
    of column i means

        ||op x_i - mu_i x_i|| / max(1, |mu_i|) <= tol.

    With ``verify`` the final residuals are re-checked against a fresh
    application of the operator before convergence is declared.

    Returns:
        (eigenvalues, X, report): the ``p`` smallest Ritz values, their
        orthonormal Ritz vectors and a :class:`SolveReport` whose
        ``extra["ritz_history"]`` records the Ritz values per iteration.
    """
    t0 = time.perf_counter()
    X = np.array(X0, dtype=float)
    n, k = X.shape
    if p is None:
        p = k
    if p > n:
        raise ValueError(f"cannot compute {p} eigenpairs of an operator of size {n}")
    if k < p:
        rng = np.random.default_rng(0)
        X = np.hstack([X, rng.standard_normal((n, p - k))])
    X = qr_orth(X)
    if X.shape[1] < p:
        rng = np.random.default_rng(1)
        X = qr_orth(np.hstack([X, rng.standard_normal((n, p - X.shape[1]))]))
    k = X.shape[1]
    AX = np.asarray(op_apply(X), dtype=float)
    w, C = np.linalg.eigh(sym(X.T @ AX))
    X, AX, lam = X @ C, AX @ C, w
    P = AP = None
    history = [lam[:p].copy()]
    res_hist = []
    status = "max_iter"
    it = 0
    applied = k
    while True:
        R = AX - X * lam
        res = np.linalg.norm(R, axis=0) / np.maximum(1.0, np.abs(lam))
        res_hist.append(float(res[:p].max()))
        if np.all(res[:p] <= tol):
            if not verify:
                status = "converged"
                break
            AX = np.asarray(op_apply(X), dtype=float)
            applied += k
            w, C = np.linalg.eigh(sym(X.T @ AX))
            X, AX, lam = X @ C, AX @ C, w
            R = AX - X * lam
            res = np.linalg.norm(R, axis=0) / np.maximum(1.0, np.abs(lam))
            res_hist[-1] = float(res[:p].max())
            if np.all(res[:p] <= tol):
                status = "converged"
                break
            P = AP = None
        if it >= max_iter:
            break
        it += 1
        active = res > tol
        active[p:] = active[p:] & np.any(active[:p])
        if P is not None:
            P, AP = _orth_tracked(P, AP, X, AX)
        W = _orth_against(R[:, active], X, P)
        if W.shape[1] == 0 and P is None:
            # nothing left to enlarge the search space with
            status = "failed"
            break
        if W.shape[1]:
            AW = np.asarray(op_apply(W), dtype=float)
            applied += W.shape[1]
        else:
            AW = np.zeros((n, 0))
        blocks = [X] + ([P] if P is not None else []) + [W]
        ablocks = [AX] + ([AP] if P is not None else []) + [AW]
        S = np.hstack(blocks)
        AS = np.hstack(ablocks)
        G = sym(S.T @ AS)
        M = sym(S.T @ S)
        try:
            w, V = scipy.linalg.eigh(G, M)
        except np.linalg.LinAlgError:
            # Rayleigh-Ritz basis degenerate: restart from the current X block
            P = AP = None
            continue
        V = V[:, :k]
        Xn = S @ V
        AXn = AS @ V
        V[:k] = 0.0
        P = S @ V
        AP = AS @ V
        X, AX, lam = Xn, AXn, w[:k]
        history.append(lam[:p].copy())
    rep = SolveReport(solver="lobpcg", status=status, outer_iterations=it,
                      wall_time=time.perf_counter() - t0)
    rep.extra["ritz_history"] = [h.tolist() for h in history]
    rep.extra["residual_history"] = res_hist
    rep.extra["columns_applied"] = applied
    return lam[:p].copy(), X[:, :p].copy(), rep


def shifted_operator(A_apply, Bhat, tau, Xk):
    """U -> A U + Bhat U - tau Xk Xk^T U."""
    bh = (lambda U: 0.0) if Bhat is None else Bhat.apply

    def op(U):
        out = A_apply(U) + bh(U)
        if tau:
            out = out - tau * (Xk @ (Xk.T @ U))
        return out

    return op


def solve_eig_subproblem(A_apply, Bhat, tau, Xk, tol, max_iter=500, return_report=False):
    """p smallest eigenvectors of A + Bhat - tau Xk Xk^T, warm-started at Xk."""
    op = shifted_operator(A_apply, Bhat, tau, Xk)
    lam, Z, rep = lobpcg(op, Xk, Xk.shape[1], tol=tol, max_iter=max_iter)
    if return_report:
        return Z, lam, rep
    return Z
