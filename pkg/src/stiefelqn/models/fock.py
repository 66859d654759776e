"""Synthetic Hartree-Fock model: KS energy plus a dense exchange-like term.

The tensor is T_ijkl = sum_a g_a M_a[i, j] M_a[k, l] with symmetric M_a and
g_a > 0, so V(D) = sum_a g_a <M_a, D> M_a is symmetric in both index pairs,
under pair exchange, and positive semidefinite as a quadratic form.
"""

from dataclasses import dataclass, field

import numpy as np

from .base import ApplyCounter, SplitObjective, rng_stream
from .ks import KsModel, ks_hamiltonian_apply, ks_hess_apply, ks_response_apply, ks_value_and_grad

MAX_DENSE_N = 80
HF_SPLITS = ("kinetic", "ks_exact", "ks_hamiltonian")


@dataclass
class FockTensor:
    T: np.ndarray
    v_applies: int = 0

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        n = T.shape[0]
        if T.shape != (n, n, n, n):
            raise ValueError("tensor must have shape (n, n, n, n)")
        if n > MAX_DENSE_N:
            raise ValueError(f"dense tensor storage is limited to n <= {MAX_DENSE_N}")
        self.T = T
        self._flat = T.reshape(n * n, n * n)

    @property
    def n(self):
        return self.T.shape[0]

    def apply(self, D):
        """V(D)_ij = sum_kl T_ijkl D_kl."""
        self.v_applies += 1
        n = self.n
        return (self._flat @ np.asarray(D, float).reshape(n * n)).reshape(n, n)


def make_fock_tensor(n, rank=8, seed=0, scale=0.5):
    if n > MAX_DENSE_N:
        raise ValueError(f"dense tensor storage is limited to n <= {MAX_DENSE_N}")
    rng = rng_stream(seed, "fock")
    T = np.zeros((n, n, n, n))
    for _ in range(rank):
        M = rng.standard_normal((n, n))
        M = (M + M.T) / np.sqrt(2 * n)
        g = scale * rng.uniform(0.5, 1.5)
        T += g * np.einsum("ij,kl->ijkl", M, M)
    return FockTensor(T)


def fock_energy(T, X):
    D = X @ X.T
    return 0.25 * float(np.vdot(T.apply(D), D))


def fock_egrad(T, X):
    return T.apply(X @ X.T) @ X


def fock_hess_apply(T, X, U):
    D1 = X @ U.T
    return T.apply(X @ X.T) @ U + T.apply(D1 + D1.T) @ X


def hf_value_and_grad(ks, T, X):
    e, g = ks_value_and_grad(ks, X)
    VD = T.apply(X @ X.T)
    VX = VD @ X
    return e + 0.25 * float(np.vdot(VX, X)), g + VX


def hf_objective(ks: KsModel, T: FockTensor, split="ks_exact"):
    """SplitObjective for E_ks + E_f.

    split "kinetic":        H^c = 1/2 L + projectors, H^e = everything else.
    split "ks_exact":       H^c = full KS Hessian, H^e = Fock Hessian.
    split "ks_hamiltonian": H^c = H_ks(X) frozen, H^e = R(X) + Fock Hessian.

    The cheap counter tallies KS-part block applications, the expensive one
    the exchange-operator block applications; ``T.v_applies`` counts the
    actual tensor contractions.
    """
    if split not in HF_SPLITS:
        raise ValueError(f"unknown HF split {split!r}; expected one of {HF_SPLITS}")
    c = ks.counter if ks.counter is not None else ApplyCounter()
    cache = {}

    def vxx(X):
        # V(X X^T) is reused across the many H^e / E0 applications at one X
        key = cache.get("X")
        if key is None or key.shape != X.shape or not np.array_equal(key, X):
            cache["X"] = X.copy()
            cache["V"] = T.apply(X @ X.T)
        return cache["V"]

    def vg(X):
        c.add_cheap(X.shape[1])
        c.add_expensive(X.shape[1])
        e, g = ks_value_and_grad(ks, X)
        V = vxx(X)
        VX = V @ X
        return e + 0.25 * float(np.vdot(VX, X)), g + VX

    def fock_part(X, U):
        c.add_expensive(U.shape[1])
        D1 = X @ U.T
        return vxx(X) @ U + T.apply(D1 + D1.T) @ X

    if split == "kinetic":
        def hc(X, U):
            c.add_cheap(U.shape[1])
            return ks.kinetic_nonlocal_apply(U)

        def he(X, U):
            return (ks.local_potential(X)[:, None] * U + ks_response_apply(ks, X, U)
                    + fock_part(X, U))
    elif split == "ks_exact":
        def hc(X, U):
            c.add_cheap(U.shape[1])
            return ks_hess_apply(ks, X, U)

        he = fock_part
    else:
        def hc(X, U):
            c.add_cheap(U.shape[1])
            return ks_hamiltonian_apply(ks, X, U)

        def he(X, U):
            return ks_response_apply(ks, X, U) + fock_part(X, U)

    def e0(X, U):
        c.add_expensive(U.shape[1])
        return vxx(X) @ U

    def ham(X, U):
        c.add_cheap(U.shape[1])
        c.add_expensive(U.shape[1])
        return ks_hamiltonian_apply(ks, X, U) + vxx(X) @ U

    return SplitObjective(vg, hc, he, e0_apply=e0, e0_nystrom=True, hamiltonian_apply=ham,
                          counter=c, name=f"hf_synth(n={ks.n}, split={split})")
