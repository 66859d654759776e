"""Model problems: two-cost eigenvalue, toy Kohn-Sham and synthetic Hartree-Fock."""

from .base import ApplyCounter, SplitObjective, rng_stream
from .eig import (EigProblem, build_bhat, eig_objective, eig_residual_err, make_eig_from_matrices,
                  make_eig_random, make_eig_wathen_like)
from .fock import FockTensor, hf_objective, make_fock_tensor
from .ks import KsModel, ks_objective, make_ks1d
from .problems import PROBLEM_KINDS, ProblemInstance, build_problem
