"""Named invariant and oracle suite behind ``stiefelqn check``.

Every check is a plain function ``check(level) -> detail`` registered under a
human-readable name. It raises :class:`CheckFailure` (an AssertionError) with
a diagnostic when the invariant does not hold. ``level="fast"`` keeps every
problem at n <= 64; ``level="full"`` uses the benchmark sizes.

Checks look functions up through their modules at call time, so a patched
function (for example a sign error injected into ``stiefel.proj_tangent``)
is what gets exercised.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels, quasinewton, stiefel, subsolvers
from .driver import asqn as asqn_mod
from .driver import ace as ace_mod
from .driver import eig as eig_drv
from .driver import policy as pol
from .models import eig as eigm
from .models import fock as fockm
from .models import ks as ksm
from .models.base import ApplyCounter, SplitObjective, rng_stream

LEVELS = ("fast", "full")


class CheckFailure(AssertionError):
    pass


@dataclass
class Check:
    name: str
    func: object
    levels: tuple
    criterion: int = None


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


REGISTRY = {}


def invariant(name, levels=LEVELS, criterion=None):
    def deco(func):
        if name in REGISTRY:
            raise ValueError(f"duplicate check name {name!r}")
        REGISTRY[name] = Check(name, func, tuple(levels), criterion)
        return func
    return deco


def expect(cond, msg):
    if not cond:
        raise CheckFailure(msg)


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def run_checks(level="fast", names=None, log=None):
    """Run the registered checks for ``level``; return a list of CheckResult."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    selected = [c for c in REGISTRY.values() if level in c.levels]
    if names is not None:
        wanted = set(names)
        unknown = wanted - set(REGISTRY)
        if unknown:
            raise KeyError(f"unknown checks: {sorted(unknown)}")
        selected = [c for c in selected if c.name in wanted]
    out = []
    for c in selected:
        t0 = time.perf_counter()
        try:
            detail = c.func(level) or ""
            ok = True
        except CheckFailure as exc:
            ok, detail = False, str(exc)
        except Exception as exc:  # a crash is a failure of that invariant too
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(c.name, ok, detail, time.perf_counter() - t0)
        out.append(res)
        if log is not None:
            log(res)
    return out


# ---------------------------------------------------------------- instances

def superlinear_instance(seed=0, n=100, p=5, scale=0.1, rank=3):
    """Eigen instance with a clear gap after the p-th eigenvalue and a low-rank
    expensive part B = -scale G G^T (G is n x rank)."""
    rng = rng_stream(seed, "superlinear")
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    d = np.concatenate([np.arange(1, p + 1), 8 + 10 * rng.random(n - p)])
    A = (Q * d) @ Q.T
    G = rng.standard_normal((n, rank))
    return eigm.EigProblem(A=A, B=-scale * (G @ G.T), p=p, name="superlinear")


def saddle_instance(seed=0, n=60, p=4, delta=1e-3, perturb=1e-5):
    """Eigen instance plus a start next to a non-minimal invariant subspace.

    The start spans eigenvectors 1..p-1 and p+1 of C, whose eigenvalue sits
    ``delta`` above the p-th, slightly perturbed. Returns (problem, X0).
    """
    rng = rng_stream(seed, "saddle")
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    d = np.concatenate([np.arange(1, p + 1), [p + delta], p + 2 + 0.5 * np.arange(n - p - 1)])
    C = (Q * d) @ Q.T
    Gm = 0.01 * rng.standard_normal((n, 2))
    B = -(Gm @ Gm.T)
    prob = eigm.EigProblem(A=C - B, B=B, p=p, name="saddle")
    cols = list(range(p - 1)) + [p]
    V = Q[:, cols]
    X0 = stiefel.retract_qr(V, perturb * stiefel.proj_tangent(V, rng.standard_normal((n, p))))
    return prob, X0


def _quadratic_objective(C):
    """f(X) = 1/2 tr(X^T C X) as a SplitObjective with H^c = C."""
    def vg(X):
        CX = C @ X
        return 0.5 * float(np.vdot(X, CX)), CX
    return SplitObjective(vg, lambda X, U: C @ U, name="quadratic")


def _rand_sym(rng, n):
    M = rng.standard_normal((n, n))
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------- kernels

@invariant("qr orthonormal")
def _qr(level):
    rng = rng_stream(0, "check-qr")
    worst = 0.0
    for _ in range(20):
        Z = rng.standard_normal((6, 3))
        Q = kernels.qr_orth(Z)
        e1 = np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1]))
        e2 = np.linalg.norm(Z - Q @ (Q.T @ Z)) / np.linalg.norm(Z)
        expect(e1 <= 1e-12 and e2 <= 1e-10, f"orthonormality {e1:.2e}, range residual {e2:.2e}")
        worst = max(worst, e1)
    Z = rng.standard_normal((8, 2))
    Q = kernels.qr_orth(np.hstack([Z, Z @ np.ones((2, 1))]))
    expect(Q.shape[1] == 2, f"rank-deficient input kept {Q.shape[1]} columns")
    return f"max ||Q^T Q - I|| = {worst:.1e}"


@invariant("sym_eig residual")
def _symeig(level):
    rng = rng_stream(0, "check-eig")
    A = _rand_sym(rng, 8)
    w, V = kernels.sym_eig(A)
    res = np.linalg.norm(A @ V - V * w) / np.linalg.norm(A)
    expect(res <= 1e-12 and np.all(np.diff(w) >= 0), f"residual {res:.2e}")
    return f"residual {res:.1e}"


@invariant("pinv penrose")
def _pinv(level):
    rng = rng_stream(0, "check-pinv")
    for M in (rng.standard_normal((5, 5)), np.outer(rng.standard_normal(5), rng.standard_normal(5))):
        P = kernels.pinv_small(M)
        errs = [np.linalg.norm(M @ P @ M - M), np.linalg.norm(P @ M @ P - P),
                np.linalg.norm((M @ P).T - M @ P), np.linalg.norm((P @ M).T - P @ M)]
        expect(max(errs) <= 1e-10 * max(1.0, np.linalg.norm(P)) ** 2, f"Penrose residuals {errs}")
    return "four conditions hold"


@invariant("matrix market round trip")
def _mm(level):
    import tempfile
    import os
    import scipy.sparse
    rng = rng_stream(0, "check-mm")
    A = _rand_sym(rng, 7)
    S = scipy.sparse.random(9, 9, density=0.3, random_state=1, format="csr")
    S = S + S.T
    with tempfile.TemporaryDirectory() as d:
        pa, ps = os.path.join(d, "a.mtx"), os.path.join(d, "s.mtx")
        kernels.write_matrix_market(pa, A)
        kernels.write_matrix_market(ps, S)
        A2 = kernels.read_matrix_market(pa)
        S2 = kernels.read_matrix_market(ps, dense=False)
    expect(np.array_equal(A, A2), "dense matrix changed on round trip")
    expect(abs(S - S2).max() == 0, "sparse matrix changed on round trip")
    return "dense and sparse"


# ---------------------------------------------------------------- stiefel

@invariant("proj idempotent")
def _proj_idem(level):
    rng = rng_stream(0, "check-proj")
    for _ in range(20):
        X = stiefel.random_point(6, 2, rng)
        Z = rng.standard_normal((6, 2))
        P1 = stiefel.proj_tangent(X, Z)
        P2 = stiefel.proj_tangent(X, P1)
        expect(np.linalg.norm(P2 - P1) <= 1e-12 * max(1.0, np.linalg.norm(Z)),
               f"||P(P(Z)) - P(Z)|| = {np.linalg.norm(P2 - P1):.2e}")
    return "P o P = P on 20 samples"


@invariant("proj tangent")
def _proj_tan(level):
    rng = rng_stream(1, "check-proj")
    for _ in range(20):
        X = kernels.qr_orth(rng.standard_normal((6, 2)))
        P = stiefel.proj_tangent(X, rng.standard_normal((6, 2)))
        v = np.linalg.norm(stiefel.sym(X.T @ P))
        expect(v <= 1e-12, f"||sym(X^T P)|| = {v:.2e}")
    return "sym(X^T P(Z)) = 0"


@invariant("retraction closed form")
def _retr_cf(level):
    for t in (0.1, 1.0, -3.0):
        Y = stiefel.retract_qr(np.array([[1.0], [0.0]]), np.array([[0.0], [t]]))
        ref = np.array([[1.0], [t]]) / np.hypot(1.0, t)
        expect(np.allclose(Y, ref, atol=1e-14), f"t={t}: {Y.ravel()} vs {ref.ravel()}")
    return "2-vector case exact"


@invariant("retraction first order")
def _retr_fo(level):
    rng = rng_stream(0, "check-retr")
    X = stiefel.random_point(10, 3, rng)
    xi = stiefel.proj_tangent(X, rng.standard_normal((10, 3)))
    errs = [np.linalg.norm(stiefel.retract_qr(X, t * xi) - X - t * xi) for t in (1e-3, 1e-4)]
    expect(stiefel.feasibility(stiefel.retract_qr(X, xi)) <= stiefel.FEAS_TOL, "retraction infeasible")
    # second-order remainder: shrinking t tenfold shrinks the error about 100x
    expect(errs[1] <= errs[0] / 50, f"remainders {errs}")
    return f"remainders {errs[0]:.1e}, {errs[1]:.1e}"


@invariant("riemannian grad fd")
def _rgrad(level):
    rng = rng_stream(0, "check-rgrad")
    n, p = 12, 3
    C = _rand_sym(rng, n)
    X = stiefel.random_point(n, p, rng)
    g = stiefel.riemannian_grad(X, C @ X)
    f = lambda Y: 0.5 * np.vdot(Y, C @ Y)
    worst = 0.0
    for _ in range(10):
        xi = stiefel.proj_tangent(X, rng.standard_normal((n, p)))
        h = 1e-5
        fd = (f(stiefel.retract_qr(X, h * xi)) - f(stiefel.retract_qr(X, -h * xi))) / (2 * h)
        worst = max(worst, abs(fd - np.vdot(g, xi)) / abs(np.vdot(g, xi)))
    expect(worst <= 1e-6, f"relative error {worst:.2e}")
    return f"max relative error {worst:.1e}"


@invariant("riemannian hessian fd")
def _rhess(level):
    rng = rng_stream(0, "check-rhess")
    n, p = 12, 3
    C = _rand_sym(rng, n)
    X = stiefel.random_point(n, p, rng)
    xi = stiefel.proj_tangent(X, rng.standard_normal((n, p)))
    H = stiefel.riemannian_hess_apply(X, C @ X, lambda U: C @ U, xi, 0.0)
    h = 1e-5
    gp = stiefel.riemannian_grad(stiefel.retract_qr(X, h * xi), C @ stiefel.retract_qr(X, h * xi))
    gm = stiefel.riemannian_grad(stiefel.retract_qr(X, -h * xi), C @ stiefel.retract_qr(X, -h * xi))
    fd = stiefel.proj_tangent(X, (gp - gm) / (2 * h))
    err = _rel(H, fd)
    expect(err <= 1e-6, f"relative error {err:.2e}")
    return f"relative error {err:.1e}"


def d_p_identity_error(n_pairs=100, seed=0):
    rng = rng_stream(seed, "check-dp")
    worst = 0.0
    for i in range(n_pairs):
        n, p = 8 + i % 13, 1 + i % 4
        X = stiefel.random_point(n, p, rng)
        Y = stiefel.random_point(n, p, rng)
        direct = np.linalg.norm(X @ X.T - Y @ Y.T) ** 2
        worst = max(worst, abs(direct - stiefel.dist_proj(X, Y)))
    return worst


@invariant("d_p identity", criterion=5)
def _dp(level):
    worst = d_p_identity_error(100)
    X = np.eye(6)[:, :2]
    Y = np.eye(6)[:, 2:4]
    expect(abs(stiefel.dist_proj(X, Y) - 4.0) <= 1e-14, "orthogonal ranges must give 2p")
    expect(worst <= 1e-10, f"max deviation {worst:.2e}")
    return f"max deviation {worst:.1e}"


# ---------------------------------------------------------------- quasinewton

@invariant("secant target quadratic")
def _secant_target(level):
    rng = rng_stream(0, "check-ytarget")
    n, p = 10, 2
    Hc, He = _rand_sym(rng, n), _rand_sym(rng, n)
    X0, X1 = rng.standard_normal((n, p)), rng.standard_normal((n, p))
    grad = lambda X: (Hc + He) @ X
    Y = quasinewton.secant_rhs(grad(X1), grad(X0), lambda U: Hc @ U, X1 - X0)
    err = _rel(Y, He @ (X1 - X0))
    expect(err <= 1e-12, f"Y differs from H^e S by {err:.2e}")
    return f"relative error {err:.1e}"


def lsr1_quadratic_errors(n=50, p=2, m=5, seed=0):
    """Push m steps of a quadratic; return (latest-pair errors per push,
    all-pair errors at the end, number of skipped pairs)."""
    rng = rng_stream(seed, "check-lsr1-quad")
    H = _rand_sym(rng, n * p)
    Happ = lambda U: (H @ U.reshape(-1)).reshape(n, p)
    mem = quasinewton.Lsr1Memory(m=m)
    latest = []
    for _ in range(m):
        S = rng.standard_normal((n, p))
        cur = quasinewton.Lsr1Operator(mem, None)
        mem = mem.push(S, Happ(S), cur.apply)
        E = quasinewton.Lsr1Operator(mem, None)
        s, y = mem.pairs[-1]
        latest.append(_rel(E.apply(s), y))
    E = quasinewton.Lsr1Operator(mem, None)
    allp = [_rel(E.apply(s), y) for s, y in mem.pairs]
    return latest, allp, mem.skipped


@invariant("lsr1 quadratic interpolation", criterion=3)
def _lsr1_quad(level):
    latest, allp, skipped = lsr1_quadratic_errors()
    expect(skipped == 0, f"{skipped} pairs skipped on a generic quadratic")
    expect(max(latest) <= 1e-8, f"latest-pair residuals {max(latest):.2e}")
    expect(max(allp) <= 1e-8, f"stored-pair residuals {max(allp):.2e}")
    # the small case: R^5, p = 1, five independent steps are all kept
    rng = rng_stream(1, "check-lsr1-small")
    H = _rand_sym(rng, 5)
    mem = quasinewton.Lsr1Memory(m=5)
    for _ in range(5):
        s = rng.standard_normal((5, 1))
        mem = mem.push(s, H @ s, quasinewton.Lsr1Operator(mem, None).apply)
    expect(len(mem) == 5, f"only {len(mem)} of 5 pairs accepted")
    return f"latest {max(latest):.1e}, all pairs {max(allp):.1e}"


def lsr1_latest_pair_errors(n_push=12, seed=0):
    """Generic (non-quadratic) pairs over a Nystrom E0: newest-pair residuals."""
    rng = rng_stream(seed, "check-lsr1-generic")
    n, p = 30, 2
    B = _rand_sym(rng, n)
    mem = quasinewton.Lsr1Memory(m=4)
    errs = []
    for _ in range(n_push):
        X = stiefel.random_point(n, p, rng)
        e0 = quasinewton.nystrom_build(lambda U: B @ U, X)
        S = 0.1 * rng.standard_normal((n, p))
        Y = B @ S + 0.05 * rng.standard_normal((n, p))
        before = len(mem.pairs), mem.skipped
        mem = mem.push(S, Y, quasinewton.Lsr1Operator(mem, e0).apply)
        if mem.skipped == before[1]:
            E = quasinewton.Lsr1Operator(mem, e0)
            errs.append(_rel(E.apply(S), Y))
    return errs


@invariant("lsr1 latest pair", criterion=3)
def _lsr1_latest(level):
    errs = lsr1_latest_pair_errors()
    expect(errs and max(errs) <= 1e-8, f"latest-pair residuals {errs}")
    return f"{len(errs)} pushes, max residual {max(errs):.1e}"


@invariant("structured secant")
def _struct_secant(level):
    rng = rng_stream(0, "check-structsec")
    n, p = 20, 2
    Hc, He = _rand_sym(rng, n), _rand_sym(rng, n)
    grad = lambda X: (Hc + He) @ X
    mem = quasinewton.Lsr1Memory(m=5)
    X = rng.standard_normal((n, p))
    for _ in range(4):
        Xn = X + 0.3 * rng.standard_normal((n, p))
        S = Xn - X
        Y = quasinewton.secant_rhs(grad(Xn), grad(X), lambda U: Hc @ U, S)
        mem = mem.push(S, Y, quasinewton.Lsr1Operator(mem, None).apply)
        B = quasinewton.StructuredHessian(lambda U: Hc @ U, mem)
        err = _rel(quasinewton.structured_apply(B, S), grad(Xn) - grad(X))
        expect(err <= 1e-8, f"B[S] misses the gradient difference by {err:.2e}")
        X = Xn
    return "B[S_k] = grad_k - grad_{k-1}"


def nystrom_full_basis_error(n=60, seed=0):
    rng = rng_stream(seed, "check-nys-full")
    B = eigm._negative_b(n, rng)
    ny = quasinewton.nystrom_build(lambda U: B @ U, np.eye(n))
    return _rel(ny.apply(np.eye(n)), B)


@invariant("nystrom full basis", criterion=4)
def _nys_full(level):
    err = nystrom_full_basis_error(60 if level == "fast" else 300)
    expect(err <= 1e-10, f"relative error {err:.2e}")
    rng = rng_stream(1, "check-nys-range")
    E0 = _rand_sym(rng, 8)
    Om = rng.standard_normal((8, 3))
    ny = quasinewton.nystrom_build(lambda U: E0 @ U, Om)
    e2 = _rel(ny.apply(Om), E0 @ Om)
    expect(e2 <= 1e-10, f"8x8 range exactness {e2:.2e}")
    Z = rng.standard_normal((8, 2))
    W = rng.standard_normal((8, 2))
    lin = _rel(ny.apply(Z + 2 * W), ny.apply(Z) + 2 * ny.apply(W))
    expect(lin <= 1e-13, "Nystrom operator is not linear")
    return f"full basis {err:.1e}, range {e2:.1e}"


def multisecant_errors(n=300, seeds=range(20), mode="asqn"):
    """build_bhat from cached B-products versus direct B application."""
    errs = []
    for s in seeds:
        prob = eigm.make_eig_random(n, 5, seed=s)
        rng = rng_stream(s, "check-multisecant")
        Xp = stiefel.random_point(n, 5, rng)
        X = stiefel.retract_qr(Xp, 0.3 * stiefel.proj_tangent(Xp, rng.standard_normal((n, 5))))
        BXp, BX = prob.B @ Xp, prob.B @ X
        Bh = eigm.build_bhat(prob, Xp, X, mode, BX_prev=BXp, BX_cur=BX)
        if mode == "asqn":
            errs.append(_rel(Bh.apply(np.hstack([Xp, X])), np.hstack([BXp, BX])))
        else:
            errs.append(_rel(Bh.apply(X), BX))
    return errs


@invariant("multisecant exact", criterion=4)
def _multisec(level):
    n, seeds = (64, range(5)) if level == "fast" else (300, range(20))
    e1 = max(multisecant_errors(n, seeds, "asqn"))
    e2 = max(multisecant_errors(n, seeds, "ace"))
    expect(e1 <= 1e-9, f"pair mode relative error {e1:.2e}")
    expect(e2 <= 1e-9, f"current mode relative error {e2:.2e}")
    return f"pair {e1:.1e}, current {e2:.1e}"


# ---------------------------------------------------------------- subsolvers

@invariant("cg dense solve")
def _cg(level):
    rng = rng_stream(0, "check-cg")
    n, p = 8, 2
    C = _rand_sym(rng, n)
    X = stiefel.random_point(n, p, rng)
    G = C @ X
    g = stiefel.proj_tangent(X, G)
    # a shift above the spread of C makes the tangent system positive definite
    tau = 2.0 * np.abs(np.linalg.eigvalsh(C)).max() + 1.0
    op = lambda xi: stiefel.riemannian_hess_apply(X, G, lambda U: C @ U, xi, tau)
    # orthonormal basis of the tangent space from projected unit matrices
    T = np.column_stack([stiefel.proj_tangent(X, e.reshape(n, p)).ravel() for e in np.eye(n * p)])
    U, s, _ = np.linalg.svd(T)
    Bt = U[:, s > 1e-10]
    Hm = Bt.T @ np.column_stack([op(b.reshape(n, p)).ravel() for b in Bt.T])
    ref = (Bt @ np.linalg.solve(0.5 * (Hm + Hm.T), -Bt.T @ g.ravel())).reshape(n, p)
    out = subsolvers.modified_cg(X, g, op, 1e-12, max_iter=200)
    err = _rel(out.step, ref)
    expect(err <= 1e-8, f"CG step differs from dense solve by {err:.2e} ({out.status})")
    return f"relative error {err:.1e}, {out.iterations} iterations"


@invariant("gbb diagonal spectrum")
def _gbb(level):
    n, p = 20, 3
    prob = eigm.make_eig_from_matrices(np.diag(np.arange(1.0, n + 1)), np.zeros((n, n)), p)
    X, rep = subsolvers.gbb(eigm.eig_objective(prob), prob.initial_point(0), grad_tol=1e-6, max_iter=2000)
    expect(rep.status == "converged", f"gbb ended with {rep.status}")
    expect(abs(rep.fval - 3.0) <= 1e-9, f"trace/2 = {rep.fval!r}, expected 3")
    return f"{rep.outer_iterations} iterations"


@invariant("lobpcg dense")
def _lobpcg(level):
    rng = rng_stream(0, "check-lobpcg")
    A = _rand_sym(rng, 50)
    w, _ = kernels.sym_eig(A)
    lam, V, rep = subsolvers.lobpcg(lambda U: A @ U, rng.standard_normal((50, 5)), 5, tol=1e-10)
    expect(np.max(np.abs(lam - w[:5])) <= 1e-8, f"eigenvalue error {np.max(np.abs(lam - w[:5])):.2e}")
    A6 = _rand_sym(rng, 6)
    lam6, _, _ = subsolvers.lobpcg(lambda U: A6 @ U, rng.standard_normal((6, 6)), 6, tol=1e-10)
    expect(np.max(np.abs(lam6 - kernels.sym_eig(A6)[0])) <= 1e-8, "p = n spectrum mismatch")
    return f"{rep.outer_iterations} iterations"


@invariant("eig subproblem tau sweep")
def _tau_sweep(level):
    rng = rng_stream(0, "check-sweep")
    n, p = 40, 3
    A = _rand_sym(rng, n)
    Xk = stiefel.random_point(n, p, rng)
    d = []
    for tau in (0.0, 10.0, 100.0):
        Z, lam, rep = subsolvers.solve_eig_subproblem(lambda U: A @ U, None, tau, Xk, 1e-10,
                                                      max_iter=1000, return_report=True)
        op = subsolvers.shifted_operator(lambda U: A @ U, None, tau, Xk)
        res = eigm.eig_residual_err(op, Z)
        expect(res <= 1e-9, f"tau={tau}: residual {res:.2e}")
        d.append(stiefel.dist_proj(Z, Xk))
    expect(d[0] > d[1] > d[2], f"d_p not decreasing in tau: {d}")
    return "d_p " + ", ".join(f"{v:.3g}" for v in d)


# ---------------------------------------------------------------- models

def fd_gradient_error(obj, X, n_dirs=20, seed=0, h=1e-5):
    """max relative error of central differences against <egrad, xi>."""
    rng = rng_stream(seed, "check-fd-grad")
    _, G = obj.value_and_grad(X)
    worst = 0.0
    for _ in range(n_dirs):
        xi = stiefel.proj_tangent(X, rng.standard_normal(X.shape))
        xi /= np.linalg.norm(xi)
        fd = (obj.f(X + h * xi) - obj.f(X - h * xi)) / (2 * h)
        an = float(np.vdot(G, xi))
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-8))
    return worst


def fd_hessian_error(obj, X, n_dirs=3, seed=0, h=1e-5):
    """max relative error of central gradient differences against hc + he."""
    rng = rng_stream(seed, "check-fd-hess")
    worst = 0.0
    for _ in range(n_dirs):
        U = rng.standard_normal(X.shape)
        U /= np.linalg.norm(U)
        fd = (obj.egrad(X + h * U) - obj.egrad(X - h * U)) / (2 * h)
        worst = max(worst, _rel(obj.hess_apply(X, U), fd))
    return worst


def fd_instances(level="full"):
    """(label, objective, point) triples for the derivative checks."""
    n_eig = 64 if level == "fast" else 200
    ep = eigm.make_eig_random(n_eig, 5, seed=0)
    ks = ksm.make_ks1d(64, 4, seed=0, xc="simple")
    ks_hf = ksm.make_ks1d(20, 3, seed=0, xc="simple")
    T = fockm.make_fock_tensor(20, rank=8, seed=0)
    Xe = ep.initial_point(0)
    Xk = ks.initial_point(0)
    Xh = ks_hf.initial_point(0)
    out = [(f"eig n={n_eig}", eigm.eig_objective(ep), Xe)]
    for split in ("kinetic", "exact"):
        out.append((f"ks {split}", ksm.ks_objective(ks, split), Xk))
    for split in fockm.HF_SPLITS:
        out.append((f"hf {split}", fockm.hf_objective(ks_hf, T, split), Xh))
    return out


@invariant("gradient fd", criterion=1)
def _grad_fd(level):
    msgs = []
    for label, obj, X in fd_instances(level):
        e = fd_gradient_error(obj, X)
        expect(e <= 1e-5, f"{label}: relative error {e:.2e}")
        msgs.append(f"{label} {e:.0e}")
    return "; ".join(msgs)


@invariant("hessian split fd", criterion=2)
def _hess_fd(level):
    msgs = []
    for label, obj, X in fd_instances(level):
        e = fd_hessian_error(obj, X)
        expect(e <= 1e-4, f"{label}: relative error {e:.2e}")
        msgs.append(f"{label} {e:.0e}")
    return "; ".join(msgs)


@invariant("ks quadratic reduction")
def _ks_quad(level):
    ks = ksm.make_ks1d(32, 3, seed=0, xc="none", n_proj=0, hartree=False)
    X = ks.initial_point(0)
    C = 0.5 * ks.L.toarray() + np.diag(ks.v_ion)
    err = _rel(ksm.ks_egrad(ks, X), C @ X)
    expect(err <= 1e-12, f"gradient differs from (L/2 + V_ion) X by {err:.2e}")
    return f"relative error {err:.1e}"


@invariant("fock symmetry")
def _fock_sym(level):
    n = 12
    Tf = fockm.make_fock_tensor(n, rank=4, seed=0)
    T = Tf.T
    rng = rng_stream(0, "check-fock")
    worst = 0.0
    for _ in range(50):
        i, j, k, l = rng.integers(0, n, 4)
        v = T[i, j, k, l]
        worst = max(worst, abs(v - T[j, i, k, l]), abs(v - T[i, j, l, k]), abs(v - T[k, l, i, j]))
    expect(worst <= 1e-10, f"index symmetry violated by {worst:.2e}")
    D1, D2 = _rand_sym(rng, n), _rand_sym(rng, n)
    a, b = np.vdot(Tf.apply(D1), D2), np.vdot(D1, Tf.apply(D2))
    expect(abs(a - b) <= 1e-10 * max(1.0, abs(a)), "<V(D1), D2> != <D1, V(D2)>")
    full = np.einsum("ijkl,kl->ij", T, D1)
    expect(_rel(Tf.apply(D1), full) <= 1e-12, "V(D) differs from the index contraction")
    return f"50 probes, max asymmetry {worst:.1e}"


@invariant("eig residual brute force")
def _eig_err(level):
    rng = rng_stream(0, "check-err")
    C = _rand_sym(rng, 30)
    X = stiefel.random_point(30, 4, rng)
    H = X.T @ C @ X
    mu, V = np.linalg.eigh(H)
    ref = max(np.linalg.norm(C @ (X @ V[:, i]) - mu[i] * (X @ V[:, i])) / max(1, abs(mu[i]))
              for i in range(4))
    got = eigm.eig_residual_err(lambda U: C @ U, X)
    expect(abs(got - ref) <= 1e-12 * max(1, ref), f"{got} vs {ref}")
    return f"err {got:.3g}"


# ---------------------------------------------------------------- driver

@invariant("model value brute force")
def _mv(level):
    rng = rng_stream(0, "check-mv")
    n, p = 15, 3
    H = _rand_sym(rng, n)
    Xk = stiefel.random_point(n, p, rng)
    Z = stiefel.random_point(n, p, rng)
    G = rng.standard_normal((n, p))
    D = Z - Xk
    lin = sum(G[:, j] @ D[:, j] for j in range(p))
    quad = 0.5 * sum(D[:, j] @ H @ D[:, j] for j in range(p))
    dq = sum((Z - Xk).ravel() ** 2)
    for reg, dist in (("quad", 0.5 * 0.7 * dq), ("cubic", 0.5 * 0.7 * (2 / 3) * dq ** 1.5),
                      ("proj", 0.25 * 0.7 * np.sum((Z @ Z.T - Xk @ Xk.T) ** 2))):
        got = asqn_mod.model_value(Xk, Z, G, lambda U: H @ U, 0.7, reg)
        ref = lin + quad + dist
        expect(abs(got - ref) <= 1e-12 * max(1, abs(ref)), f"{reg}: {got} vs {ref}")
    return "quad, cubic and proj terms"


def exact_quadratic_ratios(n_trials=10, seed=0):
    """r for exact-Hessian, tau = 0 models of f = 1/2 tr(X^T C X)."""
    rng = rng_stream(seed, "check-ratio")
    out = []
    for _ in range(n_trials):
        n, p = 20, 3
        C = _rand_sym(rng, n)
        X = stiefel.random_point(n, p, rng)
        Z = stiefel.retract_qr(X, 0.3 * stiefel.proj_tangent(X, rng.standard_normal((n, p))))
        f = lambda Y: 0.5 * float(np.vdot(Y, C @ Y))
        m = asqn_mod.model_value(X, Z, C @ X, lambda U: C @ U, 0.0)
        out.append(pol.ratio(f(Z), f(X), m) if m < 0 else pol.ratio(-f(Z), -f(X), -m))
    return out


def tau_transitions_ok(rep, policy=None):
    """Every logged (r, tau_k) -> tau_{k+1} follows the schedule; returns the
    index of the first violation or None."""
    policy = pol.RegularizationPolicy() if policy is None else policy
    for k, r in enumerate(rep.ratios):
        p = pol.RegularizationPolicy(tau=rep.taus[k], eta1=policy.eta1, eta2=policy.eta2,
                                     gamma0=policy.gamma0, gamma1=policy.gamma1, gamma2=policy.gamma2)
        if rep.taus[k + 1] != p.next_tau(r):
            return k
    return None


def driver_contract_violations(rep, points):
    """Violations of the driver contract in a finished run.

    ``points`` maps outer iteration k to the iterate handed to the callback
    (k = 0 is the start). Returns a list of messages, empty when all hold.
    """
    msgs = []
    f = rep.f_history
    slack = lambda v: 1e3 * kernels.EPS * max(1.0, abs(v))
    refined = set(rep.extra.get("refined_at", []))
    for k, acc in enumerate(rep.accepted_flags, start=1):
        if acc and f[k] > f[k - 1] + slack(f[k - 1]):
            msgs.append(f"f increased at accepted step {k}: {f[k - 1]!r} -> {f[k]!r}")
        if not acc and (k - 1) not in refined and k in points and (k - 1) in points:
            if not np.array_equal(points[k], points[k - 1]):
                msgs.append(f"rejected step {k} moved the iterate")
        if not acc and f[k] != f[k - 1] and (k - 1) not in refined and k not in refined:
            msgs.append(f"rejected step {k} changed f")
    for k, a in enumerate(rep.accepted_flags):
        if a != (rep.ratios[k] >= pol.RegularizationPolicy().eta1):
            msgs.append(f"acceptance at step {k + 1} disagrees with r = {rep.ratios[k]}")
    j = tau_transitions_ok(rep)
    if j is not None:
        msgs.append(f"tau transition {j}: r={rep.ratios[j]}, {rep.taus[j]} -> {rep.taus[j + 1]}")
    return msgs


def contract_runs(level="fast"):
    """(label, report, points) for a few driver runs with rejections."""
    runs = []
    n = 64 if level == "fast" else 500

    def capture(store):
        def cb(k, X, f, g):
            store[k] = X.copy()
        return cb

    ep = eigm.make_eig_random(n, 4, seed=1)
    pts = {0: ep.initial_point(1)}
    _, rep = asqn_mod.asqn_solve(eigm.eig_objective(ep), pts[0], callback=capture(pts),
                                 opts=asqn_mod.AsqnOptions(grad_tol=1e-8))
    runs.append(("asqn eig", rep, pts))
    ks = ksm.make_ks1d(64, 4, seed=0)
    pts = {0: ks.initial_point(0)}
    _, rep = asqn_mod.asqn_solve(ksm.ks_objective(ks), pts[0], callback=capture(pts))
    runs.append(("asqn ks", rep, pts))
    ep = eigm.make_eig_random(n, 4, seed=2)
    pts = {0: ep.initial_point(2)}
    _, rep = eig_drv.eig_driver(ep, pts[0], callback=capture(pts))
    runs.append(("eig driver", rep, pts))
    # a start with a tiny tau provokes rejections
    pts = {0: ks.initial_point(3)}
    _, rep = asqn_mod.asqn_solve(ksm.ks_objective(ks), pts[0], policy=pol.RegularizationPolicy(tau=1e-6),
                                 callback=capture(pts))
    runs.append(("asqn ks small tau", rep, pts))
    return runs


@invariant("ratio exact quadratic", criterion=7)
def _ratio_exact(level):
    rs = exact_quadratic_ratios()
    worst = max(abs(r - 1.0) for r in rs)
    expect(worst <= 1e-10, f"|r - 1| = {worst:.2e}")
    p = pol.RegularizationPolicy(tau=1.0)
    _, acc, _ = pol.accept_and_update_tau(p, p.eta1, np.zeros((2, 1)), np.ones((2, 1)))
    expect(acc, "r = eta1 must be accepted")
    return f"max |r - 1| = {worst:.1e}"


@invariant("driver contract", criterion=7)
def _contract(level):
    msgs, rejected = [], 0
    for label, rep, pts in contract_runs(level):
        msgs += [f"{label}: {m}" for m in driver_contract_violations(rep, pts)]
        rejected += rep.accepted_flags.count(False)
    expect(not msgs, "; ".join(msgs[:5]))
    expect(rejected > 0, "no rejected steps were exercised")
    return f"{rejected} rejected steps checked"


def superlinear_ratios(seed=0, n=100):
    prob = superlinear_instance(seed, n=n)
    w = np.linalg.eigvalsh(prob.dense_C())
    gap = w[prob.p] - w[prob.p - 1]
    X, rep = asqn_mod.asqn_solve(eigm.eig_objective(prob), prob.initial_point(seed),
                                 opts=asqn_mod.AsqnOptions(grad_tol=1e-6))
    g = rep.gradnorm_history
    return gap, rep, [g[i + 1] / g[i] for i in range(len(g) - 1)]


@invariant("superlinear signature", criterion=8)
def _superlinear(level):
    n = 60 if level == "fast" else 100
    gap, rep, r = superlinear_ratios(0, n)
    expect(gap >= 1.0, f"instance gap {gap:.3f} < 1")
    expect(rep.status == "converged" and rep.gradnorm <= 1e-6, f"run ended {rep.status}, gn {rep.gradnorm:.1e}")
    last = r[-3:]
    expect(last[0] > last[1] > last[2], f"last ratios not decreasing: {last}")
    expect(last[2] <= 0.1, f"final ratio {last[2]:.2e} > 0.1")
    return "last ratios " + ", ".join(f"{v:.1e}" for v in last)


def eig_benchmark(n, p, seed, max_outer=200):
    """asqn and ace eigen-driver runs on the same eig_random instance."""
    out = {}
    for mode in ("asqn", "ace"):
        prob = eigm.make_eig_random(n, p, seed=seed)
        X, rep = eig_drv.eig_driver(prob, prob.initial_point(seed), mode=mode,
                                    opts=eig_drv.EigDriverOptions(max_outer=max_outer))
        out[mode] = rep
    return out


@invariant("eig benchmark", criterion=6)
def _eig_bench(level):
    n, p = (64, 8) if level == "fast" else (2000, 10)
    msgs = []
    for seed in range(3):
        reps = eig_benchmark(n, p, seed)
        a, c = reps["asqn"], reps["ace"]
        expect(a.status == "converged" and a.extra["err"] <= 1e-10,
               f"seed {seed}: asqn {a.status}, err {a.extra['err']:.1e}")
        ratio_ = a.expensive_applies / a.cheap_applies
        expect(ratio_ <= 0.20, f"seed {seed}: BV/AV = {ratio_:.3f}")
        expect(a.expensive_applies < c.expensive_applies,
               f"seed {seed}: asqn BV {a.expensive_applies} >= ace BV {c.expensive_applies}")
        msgs.append(f"seed {seed} BV {a.expensive_applies}/{c.expensive_applies}")
    return "; ".join(msgs)


def hf_agreement(n=60, p=4, rank=8, seed=0, inners=("gbb", "scf", "cg")):
    """asqn and ace_hf_solve runs from the same KS warm start."""
    ks = ksm.make_ks1d(n, p, seed=seed)
    T = fockm.make_fock_tensor(n, rank=rank, seed=seed)
    X0, _ = ace_mod.ks_warm_start(ks, ks.initial_point(seed))
    out = {}
    ks.counter.reset()
    v0 = T.v_applies
    _, out["asqn"] = asqn_mod.asqn_solve(fockm.hf_objective(ks, T, "ks_exact"), X0,
                                         opts=asqn_mod.AsqnOptions(grad_tol=1e-6, adaptive_inner=True))
    # tensor contractions, the unit ace_hf_solve reports
    out["asqn"].extra["v_applies"] = T.v_applies - v0
    for inner in inners:
        ks.counter.reset()
        _, out[f"ace-{inner}"] = ace_mod.ace_hf_solve(ks, T, X0, inner=inner)
    return out


@invariant("hf agreement", criterion=9)
def _hf(level):
    reps = hf_agreement(inners=("gbb",) if level == "fast" else ("gbb", "scf", "cg"))
    ref = reps["asqn"].fval
    for name, rep in reps.items():
        expect(rep.gradnorm <= 1e-6 and rep.outer_iterations <= 200,
               f"{name}: gn {rep.gradnorm:.1e} after {rep.outer_iterations}")
        expect(abs(rep.fval - ref) <= 1e-7, f"{name}: energy {rep.fval!r} vs asqn {ref!r}")
    return "energies agree; " + ", ".join(f"{k} {r.outer_iterations} its" for k, r in reps.items())


@invariant("ace range exact")
def _ace_range(level):
    T = fockm.make_fock_tensor(16, rank=4, seed=0)
    rng = rng_stream(0, "check-ace")
    X = stiefel.random_point(16, 3, rng)
    VX = T.apply(X @ X.T) @ X
    err = _rel(quasinewton.nystrom_build(None, X, W=VX).apply(X), VX)
    expect(err <= 1e-10, f"Vhat X differs from V(XX^T)X by {err:.2e}")
    return f"relative error {err:.1e}"


@invariant("refine dense optimum")
def _refine_opt(level):
    n, p = 30, 3
    rng = rng_stream(0, "check-refine")
    C = _rand_sym(rng, n)
    w, V = kernels.sym_eig(C)
    X = kernels.qr_orth(V[:, :p] + 0.3 * V[:, p:2 * p])
    obj = _quadratic_objective(C)
    obj.hamiltonian_apply = lambda X, U: C @ U
    hist = asqn_mod.IterateHistory()
    g = stiefel.proj_tangent(X, C @ X)
    hist.push(X, g, np.linalg.norm(g))
    Xr = asqn_mod.subspace_refine(obj, hist, gamma=2, grad_tol=1e-10, max_iter=2000)
    gap = obj.f(Xr) - 0.5 * w[:p].sum()
    expect(gap <= 1e-9, f"refined f exceeds optimum by {gap:.2e}")
    return f"f - f* = {gap:.1e}"


def refinement_runs(seeds=range(4)):
    out = []
    for s in seeds:
        prob, X0 = saddle_instance(s)
        obj = eigm.eig_objective(prob)
        X, rep = asqn_mod.asqn_solve(obj, X0, opts=asqn_mod.AsqnOptions(grad_tol=1e-10))
        out.append((s, rep, eigm.eig_residual_err(lambda U: prob.dense_C() @ U, X)))
    return out


@invariant("refinement escape", criterion=10)
def _refine(level):
    msgs = []
    for s, rep, err in refinement_runs(range(2) if level == "fast" else range(4)):
        gains = rep.extra["refine_gain"]
        expect(gains and max(gains) >= 1e-6, f"seed {s}: refinement gains {gains}")
        expect(err <= 1e-10, f"seed {s}: final err {err:.1e}")
        expect(rep.status == "stagnated_then_refined", f"seed {s}: status {rep.status}")
        msgs.append(f"seed {s} gain {max(gains):.1e} err {err:.0e}")
    return "; ".join(msgs)


@invariant("policy ordering")
def _policy(level):
    for bad in (dict(eta1=0.5, eta2=0.4), dict(gamma0=1.0), dict(gamma1=0.9), dict(tau=-1.0)):
        try:
            pol.RegularizationPolicy(**bad)
        except ValueError:
            continue
        raise CheckFailure(f"policy accepted {bad}")
    p = pol.RegularizationPolicy(tau=1.0)
    got = [p.next_tau(r) for r in (0.95, 0.5, 0.0, -np.inf)]
    expect(got == [0.5, 2.0, 4.0, 4.0], f"tau schedule {got}")
    return "constraints enforced"


# ---------------------------------------------------------------- cli

@invariant("cli determinism")
def _cli_det(level):
    from .cli import execute_config
    cfg = {"problem": {"kind": "eig_random", "n": 60 if level == "fast" else 500, "p": 4}, "solver": "asqn", "seed": 7}
    r1, r2 = execute_config(cfg)[0], execute_config(cfg)[0]
    expect((r1["AV"], r1["BV"]) == (r2["AV"], r2["BV"]), f"counters differ: {r1} vs {r2}")
    expect(r1["status"] == "converged" and r1["err"] <= 1e-10, f"run ended {r1['status']}")
    return f"AV {r1['AV']}, BV {r1['BV']}"


@invariant("row round trip")
def _cli_rows(level):
    from .cli import execute_config, format_rows, parse_rows
    rows = execute_config({"problem": {"kind": "ks1d", "n": 32, "p": 3}, "solver": "gbb", "warm_start": True})
    rows += execute_config({"problem": {"kind": "eig_random", "n": 40, "p": 3}, "solver": "lobpcg"})
    for fmt in ("json", "csv"):
        back = parse_rows(format_rows(rows, fmt), fmt)
        for a, b in zip(rows, back):
            same = all((a[k] == b[k]) or (a[k] != a[k] and b[k] != b[k]) for k in a)
            expect(set(a) == set(b) and same, f"{fmt} round trip changed {a} into {b}")
    return "json and csv"


@invariant("compare bv ordering")
def _compare(level):
    from .cli import execute_config
    n, p = (64, 8) if level == "fast" else (1000, 10)
    rows = execute_config({"problem": {"kind": "eig_random", "n": n, "p": p},
                           "solvers": ["asqn", "ace", "lobpcg"], "seed": 0})
    bv = {r["solver"]: r["BV"] for r in rows}
    expect(bv["asqn"] < min(bv["ace"], bv["lobpcg"]), f"BV column {bv}")
    return f"BV {bv}"
