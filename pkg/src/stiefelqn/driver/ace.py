"""Nested Nystrom (adaptively compressed exchange) loop for the synthetic HF model.

The outer loop freezes a low-rank compression Vhat of the exchange operator
V(X X^T) on span{X}; the inner loop minimizes E_ks(X) + 1/2 <Vhat X, X>,
whose stationary points are HF stationary once Vhat stops changing.
"""

import time
from dataclasses import dataclass

import numpy as np

from ..models.base import SplitObjective
from ..models.fock import FockTensor
from ..models.ks import KsModel, ks_hamiltonian_apply, ks_hess_apply, ks_objective, ks_value_and_grad
from ..quasinewton import nystrom_build
from ..report import SolveReport
from ..stiefel import proj_tangent
from ..subsolvers import gbb, lobpcg
from .asqn import AsqnOptions, asqn_solve

INNER_MODES = ("scf", "gbb", "cg")


@dataclass
class AceOptions:
    grad_tol: float = 1e-6
    max_outer: int = 200
    inner_factor: float = 0.1
    inner_max_iter: int = 200
    scf_max_iter: int = 50
    subspace: str = "current"  # or "pair" for span{X_prev, X}


def _inner_objective(ks, Vhat):
    c = ks.counter

    def vg(X):
        c.add_cheap(X.shape[1])
        e, g = ks_value_and_grad(ks, X)
        VX = Vhat.apply(X)
        return e + 0.5 * float(np.vdot(VX, X)), g + VX

    def hc(X, U):
        c.add_cheap(U.shape[1])
        return ks_hess_apply(ks, X, U) + Vhat.apply(U)

    def ham(X, U):
        c.add_cheap(U.shape[1])
        return ks_hamiltonian_apply(ks, X, U) + Vhat.apply(U)

    return SplitObjective(vg, hc, None, hamiltonian_apply=ham, counter=c, name="ace-inner")


def _scf(model, X, tol, max_iter, inner_max_iter):
    """Fixed-Hamiltonian eigen-solves until the inner gradient is below tol."""
    its = 0
    for its in range(1, max_iter + 1):
        _, G = model.value_and_grad(X)
        if np.linalg.norm(proj_tangent(X, G)) <= tol:
            its -= 1
            break
        Xf = X
        _, X, _ = lobpcg(lambda U: model.hamiltonian_apply(Xf, U), X, X.shape[1],
                         tol=max(0.1 * tol, 1e-13), max_iter=inner_max_iter)
    return X, its


def ks_warm_start(ks, X0, tol=1e-3, max_iter=2000):
    """Approximate KS ground state (exchange switched off) by GBB."""
    X, rep = gbb(ks_objective(ks), X0, grad_tol=tol, max_iter=max_iter)
    return X, rep


def ace_hf_solve(ks: KsModel, T: FockTensor, X0, inner="gbb", opts=None, callback=None):
    """Outer Nystrom compression of the exchange operator, inner KS-like solve.

    ``inner`` selects the inner solver: "scf" (repeated linear eigen-solves),
    "gbb" (Riemannian BB gradient) or "cg" (regularized Newton with truncated CG).
    The expensive counter tallies exchange-operator columns, one block of p per
    outer step; ``report.extra["v_applies"]`` the tensor contractions.
    """
    if inner not in INNER_MODES:
        raise ValueError(f"inner must be one of {INNER_MODES}")
    opts = AceOptions() if opts is None else opts
    t0 = time.perf_counter()
    c = ks.counter
    v0 = T.v_applies
    X = np.array(X0, dtype=float)
    X_prev = None

    def outer_eval(X):
        c.add_cheap(X.shape[1])
        c.add_expensive(X.shape[1])
        e, g = ks_value_and_grad(ks, X)
        VD = T.apply(X @ X.T)
        VX = VD @ X
        return e + 0.25 * float(np.vdot(VX, X)), g + VX, VD, VX

    f, G, VD, VX = outer_eval(X)
    gn = float(np.linalg.norm(proj_tangent(X, G)))
    rep = SolveReport(solver=f"ace-{inner}", f_history=[f], gradnorm_history=[gn])
    status = "converged" if gn <= opts.grad_tol else "max_iter"
    k = 0
    while status != "converged" and k < opts.max_outer:
        k += 1
        if opts.subspace == "pair" and X_prev is not None:
            # V(X X^T) X is already known; only the X_prev block is new
            c.add_expensive(X.shape[1])
            Vhat = nystrom_build(lambda U: VD @ U, np.hstack([X, X_prev]))
        else:
            Vhat = nystrom_build(None, X, W=VX)
        model = _inner_objective(ks, Vhat)
        tol = opts.inner_factor * min(gn, 1.0)
        if inner == "gbb":
            Xn, irep = gbb(model, X, grad_tol=tol, max_iter=opts.inner_max_iter)
            its = irep.outer_iterations
        elif inner == "cg":
            Xn, irep = asqn_solve(model, X, opts=AsqnOptions(grad_tol=tol, exact_hessian=True,
                                                             max_outer=opts.inner_max_iter,
                                                             refine=False))
            its = irep.outer_iterations
        else:
            Xn, its = _scf(model, X, tol, opts.scf_max_iter, opts.inner_max_iter)
        rep.inner_iterations.append(int(its))
        X_prev, X = X, Xn
        f, G, VD, VX = outer_eval(X)
        gn = float(np.linalg.norm(proj_tangent(X, G)))
        rep.f_history.append(f)
        rep.gradnorm_history.append(gn)
        rep.accepted_flags.append(True)
        if callback is not None:
            callback(k, X, f, gn)
        if gn <= opts.grad_tol:
            status = "converged"
    rep.status = status
    rep.outer_iterations = k
    rep.extra["v_applies"] = T.v_applies - v0
    rep.cheap_applies, rep.expensive_applies = c.snapshot()
    rep.wall_time = time.perf_counter() - t0
    return X, rep
