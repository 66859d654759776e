import numpy as np
import pytest
from hypothesis import given, strategies as st

from stiefelqn.quasinewton import (Lsr1Breakdown, Lsr1Memory, Lsr1Operator, StructuredHessian,
                                   lsr1_apply, lsr1_push, nystrom_apply, nystrom_build, secant_rhs,
                                   structured_apply)

from conftest import rand_sym

seeds = st.integers(0, 2**31)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@given(seeds)
def test_secant_target_on_split_quadratic(seed):
    rng = np.random.default_rng(seed)
    Hc, He = rand_sym(rng, 9), rand_sym(rng, 9)
    X0, X1 = rng.standard_normal((2, 9, 2))
    Y = secant_rhs((Hc + He) @ X1, (Hc + He) @ X0, lambda U: Hc @ U, X1 - X0)
    assert _rel(Y, He @ (X1 - X0)) <= 1e-12


@given(seeds)
def test_lsr1_interpolates_all_pairs_on_quadratic(seed):
    rng = np.random.default_rng(seed)
    n, p = 12, 2
    H = rand_sym(rng, n * p)
    Hop = lambda U: (H @ U.ravel()).reshape(n, p)
    mem = Lsr1Memory(m=5)
    for _ in range(5):
        S = rng.standard_normal((n, p))
        mem = lsr1_push(mem, S, Hop(S), Lsr1Operator(mem).apply)
        s, y = mem.pairs[-1]
        assert _rel(lsr1_apply(mem, None, s), y) <= 1e-8
    E = Lsr1Operator(mem)
    for s, y in mem.pairs:
        assert _rel(E.apply(s), y) <= 1e-8


def test_small_quadratic_keeps_every_pair(rng):
    H = rand_sym(rng, 5)
    mem = Lsr1Memory(m=5)
    for _ in range(5):
        s = rng.standard_normal((5, 1))
        mem = mem.push(s, H @ s, Lsr1Operator(mem).apply)
    assert len(mem) == 5 and mem.skipped == 0


def test_memory_is_a_ring_buffer_and_immutable(rng):
    mem = Lsr1Memory(m=2)
    H = rand_sym(rng, 6)
    pushed = []
    for _ in range(3):
        s = rng.standard_normal((6, 1))
        new = mem.push(s, H @ s, Lsr1Operator(mem).apply)
        assert len(mem) <= 2 and new is not mem
        mem = new
        pushed.append(s)
    assert len(mem) == 2
    assert np.array_equal(mem.pairs[0][0], pushed[1])
    assert len(mem.cleared()) == 0


def test_skip_rule_rejects_satisfied_pair(rng):
    H = rand_sym(rng, 6)
    s = rng.standard_normal((6, 1))
    mem = Lsr1Memory(m=3).push(s, H @ s, lambda U: H @ U)
    assert len(mem) == 0 and mem.skipped == 1
    # orthogonal residual: <S, E S - Y> = 0 with E S - Y != 0
    v = rng.standard_normal((6, 1))
    v -= s * (np.vdot(s, v) / np.vdot(s, s))
    mem = Lsr1Memory(m=3).push(s, H @ s - v, lambda U: H @ U)
    assert mem.skipped == 1


def test_breakdown_on_duplicate_pairs(rng):
    s = rng.standard_normal((5, 1))
    y = rng.standard_normal((5, 1))
    mem = Lsr1Memory(m=3, pairs=((s, y), (2 * s, 2 * y)))
    with pytest.raises(Lsr1Breakdown):
        Lsr1Operator(mem)


@given(seeds)
def test_lsr1_operator_is_linear_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    H = rand_sym(rng, 8)
    mem = Lsr1Memory(m=3)
    for _ in range(3):
        s = rng.standard_normal((8, 1))
        mem = mem.push(s, H @ s, Lsr1Operator(mem).apply)
    E = Lsr1Operator(mem, lambda U: 0.5 * U)
    U, W = rng.standard_normal((2, 8, 1))
    assert np.allclose(E(U + 3 * W), E(U) + 3 * E(W), atol=1e-10)
    assert np.vdot(E(U), W) == pytest.approx(np.vdot(U, E(W)), rel=1e-8, abs=1e-10)


def test_byrd_and_full_agree_on_quadratic(rng):
    H = rand_sym(rng, 10)
    mem = Lsr1Memory(m=4)
    for _ in range(4):
        s = rng.standard_normal((10, 1))
        mem = mem.push(s, H @ s, Lsr1Operator(mem).apply)
    U = rng.standard_normal((10, 1))
    assert np.allclose(Lsr1Operator(mem, middle="byrd")(U), Lsr1Operator(mem, middle="full")(U), atol=1e-8)
    with pytest.raises(ValueError):
        Lsr1Operator(mem, middle="other")


@given(seeds, st.integers(1, 4))
def test_nystrom_range_exact(seed, k):
    rng = np.random.default_rng(seed)
    E0 = rand_sym(rng, 8)
    Om = rng.standard_normal((8, k))
    ny = nystrom_build(lambda U: E0 @ U, Om)
    assert _rel(nystrom_apply(ny, Om), E0 @ Om) <= 1e-10
    assert ny.rank == k


def test_nystrom_calls_operator_once(rng):
    E0 = rand_sym(rng, 6)
    calls = []
    ny = nystrom_build(lambda U: calls.append(U.shape) or E0 @ U, rng.standard_normal((6, 2)))
    ny.apply(rng.standard_normal((6, 3)))
    assert calls == [(6, 2)]


def test_nystrom_full_basis_reproduces_operator(rng):
    B = rand_sym(rng, 12)
    B = B @ B.T
    ny = nystrom_build(lambda U: B @ U, np.eye(12))
    assert _rel(ny.apply(np.eye(12)), B) <= 1e-10


def test_structured_secant_reconstruction(rng):
    n, p = 15, 2
    Hc, He = rand_sym(rng, n), rand_sym(rng, n)
    grad = lambda X: (Hc + He) @ X
    mem = Lsr1Memory(m=5)
    X = rng.standard_normal((n, p))
    for _ in range(4):
        Xn = X + 0.2 * rng.standard_normal((n, p))
        S = Xn - X
        mem = mem.push(S, secant_rhs(grad(Xn), grad(X), lambda U: Hc @ U, S), Lsr1Operator(mem).apply)
        B = StructuredHessian(lambda U: Hc @ U, mem)
        assert _rel(structured_apply(B, S), grad(Xn) - grad(X)) <= 1e-8
        X = Xn
