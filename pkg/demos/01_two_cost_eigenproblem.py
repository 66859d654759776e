"""Two-cost eigenvalue problem: how many expensive products does each solver need?

The objective is 1/2 tr(X^T (A + B) X) over orthonormal X, where A is cheap
to apply and B is charged as expensive. The structured quasi-Newton driver
replaces B by a Nystrom approximation on span{X_prev, X}, so every outer step
costs one block of B products. The ACE-style driver uses span{X} only, and
LOBPCG applies A and B together.

Run:  python demos/01_two_cost_eigenproblem.py [n] [p]
"""

import sys

from stiefelqn.cli import format_rows
from stiefelqn.driver.runner import run_solver
from stiefelqn.models import build_problem

n = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
p = int(sys.argv[2]) if len(sys.argv) > 2 else 10
desc = {"kind": "eig_random", "n": n, "p": p}

rows = []
for solver in ("asqn", "ace", "lobpcg"):
    # each solver gets a fresh instance with fresh counters
    inst = build_problem(desc, seed=0)
    _, rep, row = run_solver(inst, solver)
    rows.append(row)

print(f"eig_random n={n} p={p}, stop when the eigen-residual err <= 1e-10\n")
print(format_rows(rows, "table"))
a = rows[0]
print(f"asqn: {a['BV']} expensive columns against {a['AV']} cheap ones "
      f"(ratio {a['BV'] / a['AV']:.3f}).")
print(f"The generator charges one B product as {a['b_cost_weight']} plain products, "
      f"so a weighted cost would be AV + {a['b_cost_weight']} * BV.")
