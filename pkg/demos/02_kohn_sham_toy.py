"""Toy Kohn-Sham energy on a 1-D periodic grid.

The Hessian splits into the kinetic and projector part, which is cheap and
kept exactly, and the density-dependent rest. The quasi-Newton model starts
its expensive part from the local potential and corrects it with LSR1 pairs.
Every solver starts from a few gradient steps (gradnorm <= 0.1).

Run:  python demos/02_kohn_sham_toy.py
"""

from stiefelqn.cli import format_rows
from stiefelqn.driver.runner import run_solver
from stiefelqn.models import build_problem

desc = {"kind": "ks1d", "n": 128, "p": 6}
rows = []
for solver in ("asqn", "arn", "scf", "gbb"):
    inst = build_problem(desc, seed=0)
    X, rep, row = run_solver(inst, solver, warm_start=True)
    rows.append(row)
    if solver == "asqn":
        rho = inst.ks.density(X)

print(format_rows(rows, "table"))
print("Here AV counts cheap kinetic applications and BV counts evaluations of the")
print("density-dependent potential.")
print(f"Electron count check: sum(rho) = {rho.sum():.12f} (p = {desc['p']})")
