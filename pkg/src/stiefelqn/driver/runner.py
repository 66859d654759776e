"""Solver dispatch shared by the command line and the demos."""

import time

import numpy as np

from ..models.eig import eig_residual_err
from ..models.ks import ks_objective
from ..report import SolveReport
from ..stiefel import proj_tangent
from ..subsolvers import gbb, lobpcg
from .ace import AceOptions, _scf, ace_hf_solve, ks_warm_start
from .asqn import AsqnOptions, asqn_solve
from .eig import EigDriverOptions, eig_driver

SOLVERS = {
    "eig": ("asqn", "ace", "lobpcg", "gbb", "arn"),
    "ks": ("asqn", "gbb", "scf", "arn"),
    "hf": ("asqn", "akqn", "ace", "gbbn", "arn", "gbb"),
}
ALL_SOLVERS = ("asqn", "ace", "gbbn", "arn", "akqn", "gbb", "scf", "lobpcg")
# eigenvalue runs stop on the eigen-residual, the others on the gradient norm
DEFAULT_TOLS = {"eig": 1e-10, "ks": 1e-6, "hf": 1e-6}


class ConfigError(ValueError):
    """The run configuration cannot be executed."""


def _gradnorm(obj, X):
    _, G = obj.value_and_grad(X)
    return float(np.linalg.norm(proj_tangent(X, G)))


def run_solver(inst, solver, tol=None, max_outer=None, warm_start=False):
    """Run ``solver`` on the problem instance; return (X, report, row).

    ``row`` is the flat record emitted by the command line: solver, fval,
    nrmG, its, inner_avg, AV, BV (expensive count), err for eigenvalue runs,
    V_applies for HF runs, seed, status and wall time.
    """
    fam = inst.family
    if solver not in SOLVERS[fam]:
        raise ConfigError(f"solver {solver!r} is not available for {inst.kind}; "
                          f"choose from {', '.join(SOLVERS[fam])}")
    tol = DEFAULT_TOLS[fam] if tol is None else float(tol)
    max_outer = 200 if max_outer is None else int(max_outer)
    X0 = inst.initial_point()
    t0 = time.perf_counter()
    warm = None
    if warm_start and fam == "ks":
        X0, warm = gbb(inst.objective(), X0, grad_tol=1e-1, max_iter=1000)
    elif warm_start and fam == "hf":
        X0, warm = ks_warm_start(inst.ks, X0, tol=1e-3)
    if fam == "eig":
        prob = inst.eig
        if solver in ("asqn", "ace"):
            X, rep = eig_driver(prob, X0, mode=solver, opts=EigDriverOptions(err_tol=tol, max_outer=max_outer))
        elif solver == "lobpcg":
            _, X, rep = lobpcg(prob.C_apply, X0, prob.p, tol=tol, max_iter=max_outer * 50)
            rep.cheap_applies, rep.expensive_applies = prob.counter.snapshot()
        elif solver == "gbb":
            X, rep = gbb(inst.objective(), X0, grad_tol=tol, max_iter=max_outer * 50)
        else:
            X, rep = asqn_solve(inst.objective(), X0, opts=AsqnOptions(grad_tol=tol, max_outer=max_outer,
                                                                      exact_hessian=True))
    elif fam == "ks":
        obj = inst.objective("kinetic")
        if solver == "asqn":
            X, rep = asqn_solve(obj, X0, opts=AsqnOptions(grad_tol=tol, max_outer=max_outer))
        elif solver == "arn":
            X, rep = asqn_solve(ks_objective(inst.ks, "exact"), X0,
                                opts=AsqnOptions(grad_tol=tol, max_outer=max_outer, exact_hessian=True))
        elif solver == "gbb":
            X, rep = gbb(obj, X0, grad_tol=tol, max_iter=max_outer * 50)
        else:
            X, its = _scf(obj, X0, tol, max_outer, 500)
            gn = _gradnorm(obj, X)
            rep = SolveReport(solver="scf", outer_iterations=its,
                              status="converged" if gn <= tol else "max_iter",
                              f_history=[obj.f(X)], gradnorm_history=[gn])
            rep.cheap_applies, rep.expensive_applies = obj.counter.snapshot()
    else:
        if solver in ("asqn", "akqn"):
            split = "ks_exact" if solver == "asqn" else "ks_hamiltonian"
            X, rep = asqn_solve(inst.objective(split), X0,
                                opts=AsqnOptions(grad_tol=tol, max_outer=max_outer, adaptive_inner=True))
        elif solver == "gbb":
            X, rep = gbb(inst.objective(), X0, grad_tol=tol, max_iter=max_outer * 50)
        else:
            inner = {"ace": "scf", "gbbn": "gbb", "arn": "cg"}[solver]
            X, rep = ace_hf_solve(inst.ks, inst.fock, X0, inner=inner,
                                  opts=AceOptions(grad_tol=tol, max_outer=max_outer))
    rep.solver = solver
    row = {
        "solver": solver,
        "problem": inst.kind,
        "fval": float(rep.fval),
        "nrmG": float(rep.gradnorm),
        "its": int(rep.outer_iterations),
        "inner_avg": float(rep.inner_avg),
        "AV": int(rep.cheap_applies),
        "BV": int(rep.expensive_applies),
        "seed": int(inst.seed),
        "status": rep.status,
        "time": time.perf_counter() - t0,
    }
    if fam == "eig":
        # evaluated on a throwaway product so the reported counters stay as they were
        C = inst.eig.A @ X + inst.eig.B @ X
        row["err"] = eig_residual_err(None, X, np.asarray(C))
        row["b_cost_weight"] = inst.eig.b_cost_weight
    if fam == "hf":
        row["V_applies"] = int(inst.fock.v_applies)
    if warm is not None:
        row["warm_its"] = int(warm.outer_iterations)
    return X, rep, row
