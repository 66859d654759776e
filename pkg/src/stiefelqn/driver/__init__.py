"""Outer loops: structured quasi-Newton, eigenvalue driver and nested exchange compression."""

from .ace import AceOptions, ace_hf_solve, ks_warm_start
from .asqn import AsqnOptions, IterateHistory, asqn_solve, detect_stagnation, model_value, subspace_refine
from .eig import EigDriverOptions, eig_driver
from .policy import RegularizationPolicy, accept_and_update_tau, ratio
