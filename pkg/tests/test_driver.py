import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stiefelqn import checks, stiefel
from stiefelqn.driver import ace, asqn, eig as eigdrv, policy as pol
from stiefelqn.models import eig, fock, ks
from stiefelqn.report import SolveReport


@given(st.floats(1e-6, 1e6), st.floats(-10, 2, allow_nan=False))
def test_tau_schedule(tau, r):
    p = pol.RegularizationPolicy(tau=tau)
    Xk, Z = np.zeros((2, 1)), np.ones((2, 1))
    Xn, acc, p2 = pol.accept_and_update_tau(p, r, Xk, Z)
    assert acc == (r >= 0.01)
    assert Xn is (Z if acc else Xk)
    factor = 0.5 if r >= 0.9 else 2.0 if r >= 0.01 else 4.0
    assert p2.tau == pytest.approx(np.clip(factor * tau, pol.TAU_MIN, pol.TAU_MAX))


def test_boundary_ratio_accepted():
    p = pol.RegularizationPolicy(tau=1.0)
    _, acc, p2 = pol.accept_and_update_tau(p, p.eta1, np.zeros(1), np.ones(1))
    assert acc and p2.tau == 2.0


def test_policy_validation_and_initial_tau():
    with pytest.raises(ValueError):
        pol.RegularizationPolicy(eta1=0.5, eta2=0.2)
    with pytest.raises(ValueError):
        pol.RegularizationPolicy(gamma1=1.0)
    assert pol.RegularizationPolicy().initialized(3.0).tau == pytest.approx(0.03)
    assert pol.RegularizationPolicy(tau=5.0).initialized(3.0).tau == 5.0


def test_ratio_guards():
    assert pol.ratio(1.0, 2.0, -1.0) == 1.0
    assert pol.ratio(1.0, 2.0, 0.0) == -np.inf
    assert pol.ratio(np.nan, 2.0, -1.0) == -np.inf
    assert pol.noise_level_change(1.0, 1.0 + 1e-15, -1e-15)


def test_ratio_is_one_for_exact_quadratic_model():
    assert max(abs(r - 1) for r in checks.exact_quadratic_ratios()) <= 1e-10


def test_model_value_terms(rng):
    H = rng.standard_normal((6, 6))
    H = H + H.T
    Xk, Z = stiefel.random_point(6, 2, rng), stiefel.random_point(6, 2, rng)
    G = rng.standard_normal((6, 2))
    D = Z - Xk
    base = np.vdot(G, D) + 0.5 * np.vdot(H @ D, D)
    assert asqn.model_value(Xk, Z, G, lambda U: H @ U, 2.0) == pytest.approx(base + np.vdot(D, D))
    assert asqn.model_value(Xk, Z, G, None, 0.0) == pytest.approx(np.vdot(G, D))
    with pytest.raises(ValueError):
        asqn.model_value(Xk, Z, G, None, 1.0, reg="other")


def test_detect_stagnation():
    assert not asqn.detect_stagnation([1.0, 0.99, 0.98])
    assert asqn.detect_stagnation([1.0, 0.99, 0.98, 0.97, 0.99, 1.0])
    assert not asqn.detect_stagnation([1.0, 0.5, 0.25, 0.12, 0.06, 0.03])
    h = asqn.IterateHistory(2)
    for g in (1.0, 1.0, 1.0):
        h.push(np.eye(2), None, g)
        h.record(g)
    assert len(h) == 2 and h.previous_point() is not None
    h.reset_gradnorms()
    assert h.gradnorms == [1.0]


def test_subspace_refine_reaches_dense_optimum():
    # runs the registered check: refinement on a subspace containing the
    # true invariant subspace gives the global minimum
    assert checks.REGISTRY["refine dense optimum"].func("fast")


def test_options_validation():
    with pytest.raises(ValueError):
        asqn.AsqnOptions(reg="proj")
    with pytest.raises(ValueError):
        asqn.AsqnOptions(nystrom="bad")


@pytest.mark.parametrize("mode", asqn.NYSTROM_MODES)
def test_asqn_nystrom_modes_converge(mode):
    prob = eig.make_eig_random(80, 3, seed=4)
    X, rep = asqn.asqn_solve(eig.eig_objective(prob), prob.initial_point(4),
                             opts=asqn.AsqnOptions(nystrom=mode, grad_tol=1e-8))
    assert rep.status in ("converged", "stagnated_then_refined")
    w, _ = prob.exact_eigs()
    assert rep.fval == pytest.approx(0.5 * w.sum(), abs=1e-8)


def test_asqn_cubic_and_exact_modes():
    model = ks.make_ks1d(32, 3, seed=1)
    obj = ks.ks_objective(model)
    X0 = model.initial_point(1)
    _, r1 = asqn.asqn_solve(obj, X0, opts=asqn.AsqnOptions(reg="cubic"))
    _, r2 = asqn.asqn_solve(ks.ks_objective(model, "exact"), X0, opts=asqn.AsqnOptions(exact_hessian=True))
    assert r1.gradnorm <= 1e-6 and r2.gradnorm <= 1e-6
    assert r1.fval == pytest.approx(r2.fval, abs=1e-9)
    assert r2.solver == "arn"


def test_driver_contract_on_runs():
    for label, rep, pts in checks.contract_runs("fast"):
        assert checks.driver_contract_violations(rep, pts) == [], label


def test_contract_checker_catches_violations():
    rep = SolveReport(f_history=[1.0, 2.0], gradnorm_history=[1, 1], accepted_flags=[True],
                      ratios=[0.5], taus=[1.0, 3.0])
    msgs = checks.driver_contract_violations(rep, {})
    assert any("increased" in m for m in msgs) and any("tau" in m for m in msgs)


def test_eig_driver_modes():
    for mode in ("asqn", "ace"):
        prob = eig.make_eig_random(120, 4, seed=2)
        X, rep = eigdrv.eig_driver(prob, prob.initial_point(2), mode=mode)
        assert rep.status == "converged" and rep.extra["err"] <= 1e-10
        assert eig.eig_residual_err(prob.C_apply, X) <= 1e-10
        # one block of B products per outer iteration plus the start
        assert rep.expensive_applies == prob.p * (rep.outer_iterations + 1)
    with pytest.raises(ValueError):
        eigdrv.eig_driver(prob, prob.initial_point(0), mode="lobpcg")


def test_eig_driver_final_point_is_stationary():
    prob = eig.make_eig_random(150, 4, seed=5)
    X, rep = eigdrv.eig_driver(prob, prob.initial_point(5))
    C = prob.dense_C()
    gn = np.linalg.norm(C @ X - X @ (X.T @ C @ X))
    assert gn <= 10 * 1e-10 * max(1.0, np.linalg.norm(C, 2))


@pytest.mark.parametrize("inner", ace.INNER_MODES)
def test_ace_hf_inner_modes(inner):
    model = ks.make_ks1d(64, 4, seed=0)
    T = fock.make_fock_tensor(64, seed=0)
    X0, _ = ace.ks_warm_start(model, model.initial_point(0))
    X, rep = ace.ace_hf_solve(model, T, X0, inner=inner)
    assert rep.status == "converged" and rep.gradnorm <= 1e-6
    # [DERIVED] HF energy of the default hf_synth instance, shared by all solvers
    assert rep.fval == pytest.approx(-2.5319040628412, abs=1e-8)
    assert rep.extra["v_applies"] == rep.outer_iterations + 1
    with pytest.raises(ValueError):
        ace.ace_hf_solve(model, T, X0, inner="newton")


def test_ace_pair_subspace():
    model = ks.make_ks1d(64, 4, seed=0)
    T = fock.make_fock_tensor(64, seed=0)
    X0, _ = ace.ks_warm_start(model, model.initial_point(0))
    _, rep = ace.ace_hf_solve(model, T, X0, opts=ace.AceOptions(subspace="pair"))
    assert rep.fval == pytest.approx(-2.5319040628412, abs=1e-8)


def test_report_json_round_trip():
    prob = eig.make_eig_random(60, 3, seed=0)
    _, rep = asqn.asqn_solve(eig.eig_objective(prob), prob.initial_point(0))
    back = SolveReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back == rep
