import numpy as np
import pytest
from hypothesis import given, strategies as st

from stiefelqn import stiefel
from stiefelqn.checks import fd_gradient_error, fd_hessian_error
from stiefelqn.models import base, eig, fock, ks, problems

seeds = st.integers(0, 2**31)

# [DERIVED] half the sum of the smallest eigenvalues from a dense eigh of A + B
EIG500_SEED7_P10 = -149.63607983948256
EIG200_SEED0_P5 = -46.49268086253448
# [DERIVED] dense eigh of 1/2 L + diag(V_ion), n=32, p=3, no Hartree/xc/projectors
KS32_QUADRATIC = -2.9597451014094056


def test_counter_counts_columns():
    c = base.ApplyCounter()
    prob = eig.make_eig_random(30, 3, seed=0)
    prob.counter = c
    prob.A_apply(np.ones((30, 3)))
    prob.B_apply(np.ones((30, 2)))
    assert c.snapshot() == (3, 2)
    c.reset()
    assert c.snapshot() == (0, 0)


def test_rng_streams_independent_and_reproducible():
    a = base.rng_stream(3, "x").standard_normal(4)
    assert np.array_equal(a, base.rng_stream(3, "x").standard_normal(4))
    assert not np.array_equal(a, base.rng_stream(3, "y").standard_normal(4))
    assert not np.array_equal(a, base.rng_stream(4, "x").standard_normal(4))


def test_hess_apply_without_expensive_part():
    C = np.diag([1.0, 2.0, 3.0])
    obj = base.SplitObjective(lambda X: (0.0, C @ X), lambda X, U: C @ U)
    assert not obj.has_he
    assert np.array_equal(obj.hess_apply(None, np.eye(3)), C)
    with pytest.raises(NotImplementedError):
        obj.he_apply(None, np.eye(3))


@pytest.mark.parametrize("n,p,seed,ref", [(500, 10, 7, EIG500_SEED7_P10), (200, 5, 0, EIG200_SEED0_P5)])
def test_eig_random_ground_truth(n, p, seed, ref):
    prob = eig.make_eig_random(n, p, seed=seed)
    w, V = prob.exact_eigs()
    assert 0.5 * w.sum() == pytest.approx(ref, abs=1e-9)
    assert eig.eig_residual_err(prob.C_apply, V) <= 1e-10
    assert np.all(np.linalg.eigvalsh(prob.B) <= 1e-10)
    assert prob.b_cost_weight == eig.RANDOM_B_REPEATS


def test_eig_gradient_and_hessian_fd():
    prob = eig.make_eig_random(200, 5, seed=0)
    obj = eig.eig_objective(prob)
    X = prob.initial_point(0)
    assert fd_gradient_error(obj, X) <= 1e-5
    assert fd_hessian_error(obj, X) <= 1e-4


def test_eig_residual_err_brute_force(rng):
    C = rng.standard_normal((25, 25))
    C = C + C.T
    X = stiefel.random_point(25, 3, rng)
    mu, W = np.linalg.eigh(X.T @ C @ X)
    ref = max(np.linalg.norm(C @ X @ W[:, i] - mu[i] * X @ W[:, i]) / max(1, abs(mu[i])) for i in range(3))
    assert eig.eig_residual_err(lambda U: C @ U, X) == pytest.approx(ref, rel=1e-12)


@given(seeds)
def test_build_bhat_multisecant_exact(seed):
    prob = eig.make_eig_random(60, 3, seed=seed % 1000)
    rng = np.random.default_rng(seed)
    Xp = stiefel.random_point(60, 3, rng)
    X = stiefel.random_point(60, 3, rng)
    Bh = eig.build_bhat(prob, Xp, X, "asqn", BX_prev=prob.B @ Xp, BX_cur=prob.B @ X)
    blk = np.hstack([Xp, X])
    assert np.linalg.norm(Bh.apply(blk) - prob.B @ blk) <= 1e-9 * np.linalg.norm(prob.B @ blk)
    Ba = eig.build_bhat(prob, Xp, X, "ace", BX_cur=prob.B @ X)
    assert np.linalg.norm(Ba.apply(X) - prob.B @ X) <= 1e-9 * np.linalg.norm(prob.B @ X)


def test_build_bhat_uses_cached_products():
    prob = eig.make_eig_random(40, 2, seed=1)
    Xp, X = prob.initial_point(0), prob.initial_point(1)
    before = prob.counter.snapshot()
    eig.build_bhat(prob, Xp, X, "asqn", BX_prev=prob.B @ Xp, BX_cur=prob.B @ X)
    assert prob.counter.snapshot() == before
    eig.build_bhat(prob, Xp, X, "asqn")
    assert prob.counter.snapshot()[1] == before[1] + 4


def test_wathen_is_spd():
    A = eig.wathen(3, 3, np.random.default_rng(0))
    assert A.shape == (3 * 9 + 12 + 1,) * 2
    assert abs(A - A.T).max() <= 1e-12
    assert np.linalg.eigvalsh(A.toarray())[0] > 0


def test_ks_quadratic_reduction():
    model = ks.make_ks1d(32, 3, seed=0, xc="none", n_proj=0, hartree=False)
    C = 0.5 * model.L.toarray() + np.diag(model.v_ion)
    X = model.initial_point(0)
    assert np.linalg.norm(ks.ks_egrad(model, X) - C @ X) <= 1e-12 * np.linalg.norm(C @ X)
    w = np.linalg.eigvalsh(C)
    assert 0.5 * w[:3].sum() == pytest.approx(KS32_QUADRATIC, abs=1e-12)


@pytest.mark.parametrize("split", ["kinetic", "exact"])
def test_ks_derivatives_fd(split):
    model = ks.make_ks1d(64, 4, seed=0, xc="simple")
    obj = ks.ks_objective(model, split)
    X = model.initial_point(0)
    assert fd_gradient_error(obj, X) <= 1e-5
    assert fd_hessian_error(obj, X) <= 1e-5


def test_ks_lpinv_inverts_laplacian_off_constants(rng):
    model = ks.make_ks1d(32, 2)
    v = rng.standard_normal(32)
    v -= v.mean()
    assert np.allclose(model.L @ model.lpinv(v), v, atol=1e-10)


def test_ks_rejects_bad_arguments():
    with pytest.raises(ValueError):
        ks.make_ks1d(4, 5)
    with pytest.raises(ValueError):
        ks.make_ks1d(16, 2, xc="lda")
    with pytest.raises(ValueError):
        ks.ks_objective(ks.make_ks1d(16, 2), "other")


def test_fock_tensor_symmetries(rng):
    F = fock.make_fock_tensor(10, rank=3, seed=2)
    T = F.T
    assert np.allclose(T, T.transpose(1, 0, 2, 3))
    assert np.allclose(T, T.transpose(0, 1, 3, 2))
    assert np.allclose(T, T.transpose(2, 3, 0, 1))
    D1, D2 = rng.standard_normal((2, 10, 10))
    D1, D2 = D1 + D1.T, D2 + D2.T
    assert np.vdot(F.apply(D1), D2) == pytest.approx(np.vdot(D1, F.apply(D2)), rel=1e-12)
    assert np.vdot(F.apply(D1), D1) >= 0


def test_fock_size_limit():
    with pytest.raises(ValueError):
        fock.make_fock_tensor(fock.MAX_DENSE_N + 1)


@pytest.mark.parametrize("split", fock.HF_SPLITS)
def test_hf_derivatives_fd(split):
    model = ks.make_ks1d(20, 3, seed=0)
    T = fock.make_fock_tensor(20, rank=8, seed=0)
    obj = fock.hf_objective(model, T, split)
    X = model.initial_point(0)
    assert fd_gradient_error(obj, X) <= 1e-5
    assert fd_hessian_error(obj, X) <= 1e-4


def test_hf_energy_terms(rng):
    model = ks.make_ks1d(12, 2, seed=0)
    T = fock.make_fock_tensor(12, rank=2, seed=0)
    X = model.initial_point(1)
    D = X @ X.T
    ef = 0.25 * np.einsum("ijkl,ij,kl->", T.T, D, D)
    assert fock.fock_energy(T, X) == pytest.approx(ef, rel=1e-12)
    e, _ = fock.hf_value_and_grad(model, T, X)
    assert e == pytest.approx(ks.ks_energy(model, X) + ef, rel=1e-12)


def test_problem_builder_and_schema(tmp_path):
    import jsonschema
    from stiefelqn.kernels import write_matrix_market
    inst = problems.build_problem({"kind": "eig_random", "n": 20, "p": 2, "seed": 3})
    assert inst.family == "eig" and inst.seed == 3 and inst.expensive_label() == "BV"
    assert problems.build_problem({"kind": "ks1d"}, seed=5).seed == 5
    hf = problems.build_problem({"kind": "hf_synth", "n": 16, "p": 2, "rank": 2})
    assert hf.family == "hf" and hf.fock.n == 16
    A = np.diag(np.arange(1.0, 9.0))
    write_matrix_market(tmp_path / "A.mtx", A)
    write_matrix_market(tmp_path / "B.mtx", -0.1 * np.eye(8))
    mm = problems.build_problem({"kind": "eig_mm", "A": "A.mtx", "B": "B.mtx", "p": 2}, base_dir=tmp_path)
    assert mm.eig.n == 8
    for bad in ({"kind": "nope"}, {"kind": "eig_random", "n": 5}, {"kind": "ks1d", "extra": 1}):
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(bad, problems.PROBLEM_SCHEMA)
