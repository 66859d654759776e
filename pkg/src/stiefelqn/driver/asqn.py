"""Structured quasi-Newton method on the Stiefel manifold with subspace refinement."""

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..kernels import inner, qr_orth
from ..quasinewton import Lsr1Breakdown, Lsr1Memory, Lsr1Operator, nystrom_build, secant_rhs
from ..report import SolveReport
from ..stiefel import (dist_cubic, dist_proj, dist_quad, proj_tangent, retract_qr,
                       riemannian_hess_apply)
from ..subsolvers import gbb, lobpcg, modified_cg
from .policy import RegularizationPolicy, accept_and_update_tau, noise_level_change, ratio

REG_MODES = ("quad", "cubic", "proj")
NYSTROM_MODES = ("pair", "current", "augmented", "history", "none")


def model_value(Xk, Z, egrad_k, B_apply, tau, reg="quad"):
    """m(Z) = <G, D> + 1/2 <B[D], D> + tau/2 d(Z, Xk) with D = Z - Xk.

    In "proj" mode the regularizer is tau/4 * ||Z Z^T - Xk Xk^T||_F^2.
    """
    D = Z - Xk
    val = inner(egrad_k, D)
    if B_apply is not None:
        val += 0.5 * inner(B_apply(D), D)
    if reg == "quad":
        val += 0.5 * tau * dist_quad(Z, Xk)
    elif reg == "cubic":
        val += 0.5 * tau * dist_cubic(Z, Xk)
    elif reg == "proj":
        val += 0.25 * tau * dist_proj(Z, Xk)
    else:
        raise ValueError(f"unknown regularization {reg!r}")
    return float(val)


class IterateHistory:
    """Recent (X, grad, gradnorm) triples plus a gradnorm per outer iteration.

    ``record`` logs the gradnorm of the current point after every outer
    iteration, rejected ones included, so a run of stalled steps shows up as
    ratios close to one.
    """

    def __init__(self, h=4):
        self.items = deque(maxlen=h)
        self.gradnorms = []

    def push(self, X, grad, gradnorm):
        self.items.append((X, grad, gradnorm))

    def record(self, gradnorm):
        self.gradnorms.append(float(gradnorm))

    def __len__(self):
        return len(self.items)

    @property
    def latest(self):
        return self.items[-1]

    def previous_point(self):
        return self.items[-2][0] if len(self.items) > 1 else None

    def reset_gradnorms(self):
        self.gradnorms = self.gradnorms[-1:]


def detect_stagnation(history, window=5, band=0.05):
    """True when the last ``window`` gradnorm ratios all lie in [1 - band, 1 + band]."""
    g = history.gradnorms if isinstance(history, IterateHistory) else list(history)
    if len(g) < window + 1:
        return False
    tail = np.asarray(g[-window - 1:], dtype=float)
    if np.any(tail[:-1] <= 0):
        return False
    r = tail[1:] / tail[:-1]
    return bool(np.all(np.abs(r - 1.0) <= band))


class _Reduced:
    """f(Q M) as a function of M on St(q, p)."""

    def __init__(self, model, Q):
        self.model, self.Q = model, Q
        self.counter = getattr(model, "counter", None)

    def value_and_grad(self, M):
        f, G = self.model.value_and_grad(self.Q @ M)
        return f, self.Q.T @ G


def subspace_refine(model, history, gamma=2, grad_tol=None, max_iter=100, seed=0):
    """Minimize f over the points whose columns lie in span{X_prev, X, grad, Gamma}.

    Gamma holds the ``gamma * p`` lowest eigenvectors of
    ``model.hamiltonian_apply(X, .)`` when the model provides one. Returns the
    refined point, or X itself when the subspace is too small or nothing is gained.
    """
    X, grad, gn = history.latest
    n, p = X.shape
    blocks = [X]
    Xp = history.previous_point()
    if Xp is not None:
        blocks.append(Xp)
    blocks.append(grad)
    ham = getattr(model, "hamiltonian_apply", None)
    k = min(int(gamma) * p, n)
    Gam = None
    if ham is not None and k > 0:
        rng = np.random.default_rng(seed)
        start = np.hstack([X, rng.standard_normal((n, max(k - p, 0)))])[:, :k]
        _, Gam, _ = lobpcg(lambda U: ham(X, U), start, k, tol=1e-8, max_iter=300)
        blocks.append(Gam)
    try:
        Q = qr_orth(np.hstack(blocks))
    except ValueError:
        return X
    if Q.shape[1] < p:
        return X
    red = _Reduced(model, Q)
    M0 = qr_orth(Q.T @ X)
    if M0.shape[1] < p:
        return X
    f0 = fx = red.value_and_grad(M0)[0]
    if Gam is not None:
        # X may sit at a saddle of the reduced problem too; the lowest
        # eigenvectors of the Hamiltonian give a second starting point
        M1 = qr_orth(Q.T @ Gam[:, :p])
        if M1.shape[1] == p:
            f1 = red.value_and_grad(M1)[0]
            if f1 < f0:
                M0, f0 = M1, f1
    tol = max(1e-8, 0.1 * gn) if grad_tol is None else grad_tol
    M, rep = gbb(red, M0, grad_tol=tol, max_iter=max_iter)
    Xn = Q @ M
    if rep.fval > fx + 1e-12 * max(1.0, abs(fx)):
        return X
    return Xn


@dataclass
class AsqnOptions:
    grad_tol: float = 1e-6
    max_outer: int = 200
    memory: int = 5
    middle: str = "byrd"
    nystrom: str = "pair"
    exact_hessian: bool = False
    reg: str = "quad"
    cg_max_iter: int = 100
    adaptive_inner: bool = False
    refine: bool = True
    stagnation_window: int = 5
    stagnation_band: float = 0.05
    gamma: int = 2
    history: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.reg not in ("quad", "cubic"):
            raise ValueError("asqn_solve supports reg 'quad' or 'cubic'")
        if self.nystrom not in NYSTROM_MODES:
            raise ValueError(f"nystrom must be one of {NYSTROM_MODES}")


def _e0_operator(model, X, hist, mode):
    """Initial operator E0 for the current outer step.

    Nystrom subspaces: "current" span{X}, "pair" span{X_prev, X},
    "augmented" span{X_prev, X, E0[X]}, "history" span of the stored iterates.
    """
    if model.e0_apply is None:
        return None
    if not model.e0_nystrom:
        return lambda U: model.e0_apply(X, U)
    if mode == "none":
        return None
    Xp = hist.previous_point()
    e0 = lambda U: model.e0_apply(X, U)
    if mode == "current" or Xp is None:
        return nystrom_build(e0, X)
    if mode == "pair":
        return nystrom_build(e0, np.hstack([Xp, X]))
    if mode == "augmented":
        # E0[X] is reused as part of W for the X columns of the basis
        EX = e0(X)
        basis = qr_orth(np.hstack([X, Xp, EX]))
        return nystrom_build(e0, basis)
    return nystrom_build(e0, np.hstack([item[0] for item in hist.items]))


def asqn_solve(model, X0, policy=None, opts=None, callback=None):
    """Regularized structured quasi-Newton iteration.

    Each outer step builds B = H^c(X) + E with E the LSR1 operator over an
    initial operator E0 (a Nystrom compression of ``model.e0_apply`` or the
    operator itself), solves the regularized Newton equation inexactly with
    truncated CG, retracts, and runs the ratio test. With
    ``opts.exact_hessian`` B is the exact Hessian (adaptive regularized Newton).

    Returns:
        (X, SolveReport). ``report.extra`` holds per-iteration model values,
        CG statuses and residuals, and the number of LSR1 breakdowns.
    """
    opts = AsqnOptions() if opts is None else opts
    policy = RegularizationPolicy() if policy is None else policy
    t0 = time.perf_counter()
    X = np.array(X0, dtype=float)
    f, G = model.value_and_grad(X)
    g = proj_tangent(X, G)
    gn = float(np.linalg.norm(g))
    policy = policy.initialized(gn)
    hist = IterateHistory(opts.history)
    hist.push(X, g, gn)
    hist.record(gn)
    memory = Lsr1Memory(m=opts.memory)
    rep = SolveReport(solver="arn" if opts.exact_hessian else "asqn",
                      f_history=[f], gradnorm_history=[gn], taus=[policy.tau])
    ext = {"model_values": [], "cg_status": [], "cg_residual": [], "cg_tol": [],
           "breakdowns": 0, "skipped_pairs": 0, "refined_at": [], "refine_gain": [], "step_norms": []}
    X_prev = None
    cg_cap = 10.0 if opts.adaptive_inner else float(opts.cg_max_iter)
    last_step = gn
    status = "converged" if gn <= opts.grad_tol else "max_iter"
    k = 0
    while status != "converged" and k < opts.max_outer:
        k += 1
        tau = policy.tau
        if opts.exact_hessian:
            def B_apply(U, X=X):
                return model.hess_apply(X, U)
        else:
            e0 = _e0_operator(model, X, hist, opts.nystrom)
            try:
                E = Lsr1Operator(memory, e0, middle=opts.middle)
            except Lsr1Breakdown:
                ext["breakdowns"] += 1
                memory = memory.cleared()
                E = Lsr1Operator(memory, e0, middle=opts.middle)

            def B_apply(U, X=X, E=E):
                return model.hc_apply(X, U) + E.apply(U)

        shift = tau if opts.reg == "quad" else tau * last_step
        theta = min(1.0, gn)
        cg_tol = theta * gn
        out = modified_cg(X, g, lambda xi: riemannian_hess_apply(X, G, B_apply, xi, shift),
                          cg_tol, max_iter=int(round(cg_cap)))
        xi = out.step
        Z = retract_qr(X, xi)
        m_val = model_value(X, Z, G, B_apply, tau, opts.reg)
        fz, Gz = model.value_and_grad(Z)
        r = ratio(fz, f, m_val)
        if r < policy.eta1 and noise_level_change(fz, f, m_val):
            # both reductions are lost in round-off: judge the step by its gradient
            gz = float(np.linalg.norm(proj_tangent(Z, Gz)))
            if gz < gn:
                r = 1.0
        Xn, accepted, policy = accept_and_update_tau(policy, r, X, Z)
        rep.inner_iterations.append(out.iterations)
        rep.ratios.append(float(r))
        rep.taus.append(policy.tau)
        rep.accepted_flags.append(accepted)
        ext["model_values"].append(m_val)
        ext["cg_status"].append(out.status)
        ext["cg_residual"].append(out.residual_norm)
        ext["cg_tol"].append(cg_tol)
        ext["step_norms"].append(float(np.linalg.norm(xi)))
        if opts.adaptive_inner:
            if not accepted:
                cg_cap *= 1.3
            elif r >= policy.eta2:
                cg_cap *= 0.7
            cg_cap = float(np.clip(cg_cap, 5, 200))
        if accepted:
            last_step = float(np.linalg.norm(Z - X))
            S = Z - X
            if not opts.exact_hessian:
                Y = secant_rhs(Gz, G, lambda U: model.hc_apply(Z, U), S)
                before = memory.skipped
                try:
                    cur = Lsr1Operator(memory, e0, middle=opts.middle)
                    memory = memory.push(S, Y, cur.apply)
                except Lsr1Breakdown:
                    ext["breakdowns"] += 1
                    memory = memory.cleared().push(S, Y, e0 if e0 is not None else (lambda U: 0 * U))
                ext["skipped_pairs"] += memory.skipped - before
            X_prev = X
            X, f, G = Xn, fz, Gz
            g = proj_tangent(X, G)
            gn = float(np.linalg.norm(g))
            hist.push(X, g, gn)
        hist.record(gn)
        rep.f_history.append(f)
        rep.gradnorm_history.append(gn)
        if callback is not None:
            callback(k, X, f, gn)
        if gn <= opts.grad_tol:
            status = "converged"
            break
        if (opts.refine
                and detect_stagnation(hist, opts.stagnation_window, opts.stagnation_band)):
            Xr = subspace_refine(model, hist, gamma=opts.gamma, seed=opts.seed + k)
            if Xr is not X:
                fr, Gr = model.value_and_grad(Xr)
                if fr < f:
                    f_before = f
                    X_prev = X
                    X, f, G = Xr, fr, Gr
                    g = proj_tangent(X, G)
                    gn = float(np.linalg.norm(g))
                    hist.push(X, g, gn)
                    hist.record(gn)
                    rep.f_history[-1] = f
                    rep.gradnorm_history[-1] = gn
                    memory = memory.cleared()
                    rep.refinements += 1
                    ext["refined_at"].append(k)
                    ext["refine_gain"].append(f_before - f)
            hist.reset_gradnorms()
            if gn <= opts.grad_tol:
                status = "converged"
                break
    if status == "converged" and rep.refinements:
        status = "stagnated_then_refined"
    rep.status = status
    rep.outer_iterations = k
    rep.extra.update(ext)
    rep.cheap_applies, rep.expensive_applies = model.counter.snapshot()
    rep.wall_time = time.perf_counter() - t0
    return X, rep
