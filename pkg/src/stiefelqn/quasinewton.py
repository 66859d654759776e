"""Structured Hessian approximations B = H^c + E.

The cheap Hessian part H^c is applied exactly; the expensive part is replaced
by a limited-memory SR1 operator E built on top of an initial operator E0,
which is usually a Nystrom compression of some known but costly operator.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import inner, pinv_small, qr_orth

LSR1_COND_MAX = 1e14


class Lsr1Breakdown(np.linalg.LinAlgError):
    """The compact-form middle matrix is numerically singular."""


def zero_operator(U):
    return np.zeros_like(U)


def _as_apply(e0):
    if e0 is None:
        return zero_operator
    if isinstance(e0, NystromOperator):
        return e0.apply
    return e0


@dataclass(frozen=True)
class NystromOperator:
    """Low-rank operator U -> W core W^T U with core = pinv(W^T omega)."""

    omega: np.ndarray
    W: np.ndarray
    core: np.ndarray

    @property
    def rank(self):
        return self.omega.shape[1]

    def apply(self, U):
        return self.W @ (self.core @ (self.W.T @ U))

    __call__ = apply


def nystrom_build(e0_apply, basis, W=None):
    """Compress the symmetric operator ``e0_apply`` onto span(basis).

    ``e0_apply`` is called exactly once, on the orthonormalized basis. Pass
    ``W`` (already equal to ``e0_apply(basis)`` for an orthonormal ``basis``)
    to skip that call.
    """
    if W is None:
        omega = qr_orth(basis)
        W = np.asarray(e0_apply(omega), dtype=float)
    else:
        omega = np.asarray(basis, dtype=float)
    G = W.T @ omega
    # exact arithmetic gives omega^T E0 omega, which is symmetric
    core = pinv_small(0.5 * (G + G.T))
    return NystromOperator(omega=omega, W=W, core=core)


def nystrom_apply(ny, U):
    return ny.apply(U)


def secant_rhs(grad_k, grad_km1, hc_apply, S):
    """Revised secant target Y = grad_k - grad_km1 - H^c[S]."""
    return grad_k - grad_km1 - hc_apply(S)


@dataclass(frozen=True)
class Lsr1Memory:
    """Ring buffer of (S, Y) pairs, oldest first.

    ``push`` returns a new memory; the instance itself is never mutated.
    """

    m: int = 5
    pairs: tuple = ()
    skip_tol: float = 1e-8
    noise_tol: float = 1e-10
    skipped: int = 0

    def __len__(self):
        return len(self.pairs)

    def push(self, S, Y, current_apply):
        """Append (S, Y) unless the SR1 denominator test rejects it."""
        if self.m <= 0:
            return replace(self, skipped=self.skipped + 1)
        V = current_apply(S) - Y
        lhs = abs(inner(S, V))
        vn = np.linalg.norm(V)
        # a residual at round-off level means the pair is already satisfied;
        # storing it would amplify noise through the tiny middle matrix
        if vn <= self.noise_tol * max(np.linalg.norm(Y), np.linalg.norm(Y + V)):
            return replace(self, skipped=self.skipped + 1)
        if lhs <= self.skip_tol * np.linalg.norm(S) * vn:
            return replace(self, skipped=self.skipped + 1)
        pairs = self.pairs + ((np.array(S, dtype=float), np.array(Y, dtype=float)),)
        return replace(self, pairs=pairs[-self.m:])

    def cleared(self):
        return replace(self, pairs=())


def lsr1_push(memory, S, Y, current_apply):
    return memory.push(S, Y, current_apply)


class Lsr1Operator:
    """Compact-form LSR1 operator E[U] = E0[U] + N M^{-1} N^T vec(U).

    ``middle`` selects how the pair Gram matrix enters M:

    * ``"byrd"`` (default): D + L + L^T with L_ij = <S_i, Y_j> for i > j, the
      form equivalent to recursive SR1 updates. The newest pair is always
      interpolated.
    * ``"full"``: the whole Gram matrix <S_i, Y_j>, symmetrized. Identical to
      ``"byrd"`` whenever S^T Y is symmetric (quadratic objectives).

    Raises:
        Lsr1Breakdown: when M has condition number above 1e14.
    """

    def __init__(self, memory, e0=None, middle="byrd"):
        if middle not in ("byrd", "full"):
            raise ValueError(f"unknown middle-matrix form {middle!r}")
        self.e0 = _as_apply(e0)
        self.memory = memory
        l = len(memory.pairs)
        self.N = []
        self._coef = None
        if l == 0:
            return
        # unit-length steps: the operator is unchanged, but the conditioning
        # test no longer mistakes a mix of long and short steps for degeneracy
        scale = [1.0 / max(np.linalg.norm(s), 1e-300) for s, _ in memory.pairs]
        S = [c * s for c, (s, _) in zip(scale, memory.pairs)]
        Y = [c * y for c, (_, y) in zip(scale, memory.pairs)]
        sigma = [self.e0(s) for s in S]
        self.N = [y - sg for y, sg in zip(Y, sigma)]
        F = np.array([[inner(S[i], Y[j]) for j in range(l)] for i in range(l)])
        if middle == "byrd":
            low = np.tril(F)
            F = low + np.tril(F, -1).T
        StS = np.array([[inner(S[i], sigma[j]) for j in range(l)] for i in range(l)])
        M = F - StS
        M = 0.5 * (M + M.T)
        w, V = np.linalg.eigh(M)
        aw = np.abs(w)
        if aw.min() == 0.0 or aw.max() / aw.min() > LSR1_COND_MAX:
            raise Lsr1Breakdown("degenerate LSR1 system")
        self._coef = (V / w) @ V.T

    def apply(self, U):
        out = self.e0(U)
        if self._coef is None:
            return out
        c = np.array([inner(n_j, U) for n_j in self.N])
        c = self._coef @ c
        for cj, n_j in zip(c, self.N):
            out = out + cj * n_j
        return out

    __call__ = apply


def lsr1_apply(memory, e0, U, middle="byrd"):
    return Lsr1Operator(memory, e0, middle=middle).apply(U)


@dataclass
class StructuredHessian:
    """B[U] = H^c[U] + E[U] with E the LSR1 operator over ``e0``."""

    hc_apply: object
    memory: Lsr1Memory = field(default_factory=Lsr1Memory)
    e0: object = None
    middle: str = "byrd"

    def __post_init__(self):
        self._E = Lsr1Operator(self.memory, self.e0, middle=self.middle)

    @property
    def E(self):
        return self._E

    def apply(self, U):
        return self.hc_apply(U) + self._E.apply(U)

    __call__ = apply


def structured_apply(B, U):
    return B.apply(U)
