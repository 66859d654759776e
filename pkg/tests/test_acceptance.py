"""Acceptance criteria 1-11 at their stated sizes and tolerances.

Each test prints one ``CRITERION k PASS|FAIL`` line to the terminal,
whether or not output capture is on.
"""

import io
import time

import numpy as np
import pytest

from stiefelqn import checks, cli


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def test_criterion_01_gradients(report):
    t0 = time.perf_counter()
    errs = {label: checks.fd_gradient_error(obj, X, n_dirs=20) for label, obj, X in checks.fd_instances("full")}
    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    report(1, worst <= 1e-5 and elapsed < 10,
           f"max relative FD error {worst:.1e} over {len(errs)} objectives, {elapsed:.1f}s")


def test_criterion_02_hessian_splits(report):
    errs = {label: checks.fd_hessian_error(obj, X) for label, obj, X in checks.fd_instances("full")}
    worst = max(errs.values())
    report(2, worst <= 1e-4, "; ".join(f"{k} {v:.0e}" for k, v in errs.items()))


def test_criterion_03_secant(report):
    latest, allp, skipped = checks.lsr1_quadratic_errors(n=50, p=2, m=5)
    generic = checks.lsr1_latest_pair_errors()
    ok = max(latest + generic) <= 1e-8 and max(allp) <= 1e-8 and skipped == 0
    report(3, ok, f"latest-pair {max(latest + generic):.1e}, stored pairs {max(allp):.1e}")


def test_criterion_04_nystrom(report):
    e_pair = max(checks.multisecant_errors(300, range(20), "asqn"))
    e_full = checks.nystrom_full_basis_error(300)
    report(4, e_pair <= 1e-9 and e_full <= 1e-10, f"multisecant {e_pair:.1e}, full basis {e_full:.1e}")


def test_criterion_05_dp_identity(report):
    worst = checks.d_p_identity_error(100)
    report(5, worst <= 1e-10, f"max deviation {worst:.1e} on 100 pairs")


@pytest.mark.slow
def test_criterion_06_eig_benchmark(report):
    rows, ok = [], True
    for seed in range(3):
        t0 = time.perf_counter()
        reps = checks.eig_benchmark(2000, 10, seed, max_outer=200)
        a, c = reps["asqn"], reps["ace"]
        ratio = a.expensive_applies / a.cheap_applies
        good = (a.status == "converged" and a.extra["err"] <= 1e-10 and a.outer_iterations <= 200
                and ratio <= 0.20 and a.expensive_applies < c.expensive_applies
                and time.perf_counter() - t0 < 300)
        ok &= good
        rows.append(f"seed {seed}: its {a.outer_iterations}, AV {a.cheap_applies}, BV {a.expensive_applies}"
                    f" (ace {c.expensive_applies}), BV/AV {ratio:.3f}, err {a.extra['err']:.1e}")
    report(6, ok, "; ".join(rows))


def test_criterion_07_driver_contract(report):
    msgs, rejected, accepted = [], 0, 0
    for label, rep, pts in checks.contract_runs("full"):
        msgs += [f"{label}: {m}" for m in checks.driver_contract_violations(rep, pts)]
        rejected += rep.accepted_flags.count(False)
        accepted += rep.accepted_flags.count(True)
    r_err = max(abs(r - 1.0) for r in checks.exact_quadratic_ratios())
    ok = not msgs and rejected > 0 and r_err <= 1e-10
    report(7, ok, "; ".join(msgs[:3]) or
           f"{accepted} accepted / {rejected} rejected steps consistent, |r - 1| = {r_err:.1e}")


def test_criterion_08_superlinear(report):
    t0 = time.perf_counter()
    gap, rep, r = checks.superlinear_ratios(0, n=100)
    last = r[-3:]
    ok = (gap >= 1 and rep.gradnorm <= 1e-6 and last[0] > last[1] > last[2] and last[2] <= 0.1
          and time.perf_counter() - t0 < 30)
    report(8, ok, f"gap {gap:.2f}, last ratios " + ", ".join(f"{v:.1e}" for v in last))


def test_criterion_09_hf_agreement(report):
    reps = checks.hf_agreement(n=60, p=4, rank=8, seed=0)
    ref = reps["asqn"].fval
    ok = all(r.gradnorm <= 1e-6 and r.outer_iterations <= 200 and abs(r.fval - ref) <= 1e-7
             for r in reps.values())
    spread = max(abs(r.fval - ref) for r in reps.values())
    counts = ", ".join(f"{k} V={r.extra.get('v_applies', r.expensive_applies)}" for k, r in reps.items())
    report(9, ok, f"E = {ref:.10f}, spread {spread:.1e}; {counts}")


def test_criterion_10_refinement(report):
    runs = checks.refinement_runs(range(4))
    ok = all(rep.extra["refine_gain"] and max(rep.extra["refine_gain"]) >= 1e-6 and err <= 1e-10
             for _, rep, err in runs)
    report(10, ok, "; ".join(f"seed {s}: gain {max(rep.extra['refine_gain'] or [0]):.1e}, err {err:.0e}"
                             for s, rep, err in runs))


@pytest.mark.slow
def test_criterion_11_full_suite(report):
    buf = io.StringIO()
    t0 = time.perf_counter()
    code = cli.cmd_check("full", out=buf)
    elapsed = time.perf_counter() - t0
    tail = buf.getvalue().strip().splitlines()[-1]
    report(11, code == 0 and elapsed < 1800, f"{tail} in {elapsed:.0f}s")
