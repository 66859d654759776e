"""Structured quasi-Newton methods for optimization on the Stiefel manifold.

The cheap part of the Hessian is kept exactly and the expensive part is
replaced by a limited-memory SR1 update over a Nystrom compression. The
package ships two-cost eigenvalue, toy Kohn-Sham and synthetic Hartree-Fock
models plus a command-line benchmark harness.
"""

from .driver import (AceOptions, AsqnOptions, EigDriverOptions, RegularizationPolicy,
                     ace_hf_solve, asqn_solve, eig_driver)
from .models import (SplitObjective, build_problem, eig_objective, hf_objective, ks_objective,
                     make_eig_random, make_fock_tensor, make_ks1d)
from .report import SolveReport
from .stiefel import proj_tangent, random_point, retract_qr

__version__ = "0.1.0"

__all__ = [
    "AceOptions", "AsqnOptions", "EigDriverOptions", "RegularizationPolicy", "SolveReport",
    "SplitObjective", "ace_hf_solve", "asqn_solve", "build_problem", "eig_driver",
    "eig_objective", "hf_objective", "ks_objective", "make_eig_random", "make_fock_tensor",
    "make_ks1d", "proj_tangent", "random_point", "retract_qr",
]
