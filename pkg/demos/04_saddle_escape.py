"""Escaping a saddle point with subspace refinement.

The start is a slightly perturbed copy of an invariant subspace that holds
the wrong eigenvector: eigenvalue p+1 instead of p, with the two only 1e-3
apart. Newton-type steps barely move away, so the gradient norm stalls.
Stagnation detection then triggers a solve on the subspace spanned by the
iterates, the gradient and a few low eigenvectors of the Hamiltonian. That
solve jumps to the right subspace.

Run:  python demos/04_saddle_escape.py
"""

import numpy as np

from stiefelqn.checks import saddle_instance
from stiefelqn.driver import AsqnOptions, asqn_solve
from stiefelqn.models import eig_objective, eig_residual_err

prob, X0 = saddle_instance(seed=0)
obj = eig_objective(prob)
w = np.linalg.eigvalsh(prob.dense_C())


def show(k, X, f, gn):
    print(f"  it {k:3d}  f - f* = {f - 0.5 * w[:prob.p].sum():.3e}  gradnorm = {gn:.3e}")


print("with refinement")
X, rep = asqn_solve(obj, X0, opts=AsqnOptions(grad_tol=1e-10), callback=show)
print(f"status {rep.status}, refined at iterations {rep.extra['refined_at']},"
      f" f decrease {rep.extra['refine_gain']}")
print(f"final eigen-residual {eig_residual_err(prob.C_apply, X):.1e}\n")

print("without refinement (first 15 iterations)")
_, rep = asqn_solve(obj, X0, opts=AsqnOptions(grad_tol=1e-10, refine=False, max_outer=15))
print(f"status {rep.status}, f - f* = {rep.fval - 0.5 * w[:prob.p].sum():.3e}")
