"""Reduced Kohn-Sham total energy on a 1-D periodic grid.

E(X) = 1/4 tr(X^T L X) + 1/2 tr(X^T V X) + 1/2 sum_l zeta_l ||X^T w_l||^2
       + 1/4 rho^T L^+ rho + 1/2 sum eps_xc(rho),       rho = diag(X X^T)

with L the periodic second-difference matrix [-1, 2, -1] / h^2.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from ..kernels import qr_orth
from .base import ApplyCounter, SplitObjective, rng_stream

C_X = 0.75 * (3.0 / np.pi) ** (1.0 / 3.0)
XC_MODES = ("none", "simple")
RHO_FLOOR = 1e-14


def periodic_laplacian(n, h):
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    L = scipy.sparse.diags([main, off, off], [0, 1, -1], shape=(n, n), format="lil")
    if n > 2:
        L[0, n - 1] = -1.0
        L[n - 1, 0] = -1.0
    elif n == 2:
        L[0, 1] = L[1, 0] = -2.0
    return L.tocsr() / h ** 2


def eps_xc(rho):
    return -C_X * rho ** (4.0 / 3.0)


def mu_xc(rho):
    """First derivative of eps_xc."""
    return -(4.0 / 3.0) * C_X * np.cbrt(rho)


def dmu_xc(rho):
    """Second derivative of eps_xc; floored density avoids the rho = 0 pole."""
    return -(4.0 / 9.0) * C_X * np.maximum(rho, RHO_FLOOR) ** (-2.0 / 3.0)


@dataclass
class KsModel:
    n: int
    p: int
    v_ion: np.ndarray
    proj_w: np.ndarray  # n x nl, columns w_l
    proj_zeta: np.ndarray  # nl signs
    xc: str = "simple"
    hartree: bool = True
    counter: ApplyCounter = field(default_factory=ApplyCounter)

    def __post_init__(self):
        if self.xc not in XC_MODES:
            raise ValueError(f"xc must be one of {XC_MODES}, got {self.xc!r}")
        if self.proj_w.ndim != 2 or self.proj_w.shape[0] != self.n:
            raise ValueError("projectors must be an n x nl array")
        self.h = 2 * np.pi / self.n
        self.L = periodic_laplacian(self.n, self.h)
        k = np.arange(self.n // 2 + 1)
        lam = (2.0 - 2.0 * np.cos(2 * np.pi * k / self.n)) / self.h ** 2
        inv = np.zeros_like(lam)
        inv[1:] = 1.0 / lam[1:]
        self._lpinv_symbol = inv

    def lpinv(self, v):
        """L^+ v with the constant mode removed (L is singular on a torus)."""
        return np.fft.irfft(np.fft.rfft(v) * self._lpinv_symbol, n=self.n)

    def density(self, X):
        return np.einsum("ij,ij->i", X, X)

    def local_potential(self, X, rho=None):
        """V_ion + L^+ rho + mu_xc(rho): the diagonal of H_ks(X) apart from L and projectors."""
        rho = self.density(X) if rho is None else rho
        v = self.v_ion + self.lpinv(rho) if self.hartree else self.v_ion.copy()
        if self.xc == "simple":
            v = v + mu_xc(rho)
        return v

    def kinetic_nonlocal_apply(self, U):
        """(1/2 L + sum zeta w w^T) U, the fixed part of the Hamiltonian."""
        out = 0.5 * (self.L @ U)
        if self.proj_w.shape[1]:
            out = out + self.proj_w @ (self.proj_zeta[:, None] * (self.proj_w.T @ U))
        return out

    def initial_point(self, seed=0):
        return qr_orth(rng_stream(seed, "ks-x0").standard_normal((self.n, self.p)))


def make_ks1d(n=64, p=4, seed=0, xc="simple", n_proj=2, n_wells=2, well_depth=4.0,
              well_width=0.6, proj_width=0.4, hartree=True):
    """Toy 1-D periodic KS model with Gaussian wells and random-sign projectors."""
    if not n >= p >= 1:
        raise ValueError(f"need n >= p >= 1, got n={n}, p={p}")
    if not 0 <= n_proj <= 2:
        raise ValueError("n_proj must be 0, 1 or 2")
    rng = rng_stream(seed, "ks-model")
    x = 2 * np.pi * np.arange(n) / n
    centers = 2 * np.pi * (np.arange(n_wells) + 0.25 * rng.random(n_wells)) / max(n_wells, 1)

    def bump(c, w):
        d = np.angle(np.exp(1j * (x - c)))  # periodic distance
        return np.exp(-0.5 * (d / w) ** 2)

    v_ion = -sum(well_depth * bump(c, well_width) for c in centers) if n_wells else np.zeros(n)
    W = np.zeros((n, n_proj))
    for l in range(n_proj):
        w = bump(centers[l % len(centers)] if n_wells else rng.random() * 2 * np.pi, proj_width)
        W[:, l] = w / np.linalg.norm(w)
    zeta = rng.choice([-1.0, 1.0], size=n_proj)
    return KsModel(n=n, p=p, v_ion=np.asarray(v_ion, float), proj_w=W, proj_zeta=zeta, xc=xc,
                   hartree=hartree)


def ks_hamiltonian_apply(model, X, U, rho=None):
    """H_ks(X) U."""
    return model.kinetic_nonlocal_apply(U) + model.local_potential(X, rho)[:, None] * U


def ks_energy(model, X):
    rho = model.density(X)
    e = 0.25 * float(np.vdot(X, model.L @ X)) + 0.5 * float(model.v_ion @ rho)
    if model.proj_w.shape[1]:
        P = model.proj_w.T @ X
        e += 0.5 * float(np.sum(model.proj_zeta[:, None] * P ** 2))
    if model.hartree:
        e += 0.25 * float(rho @ model.lpinv(rho))
    if model.xc == "simple":
        e += 0.5 * float(np.sum(eps_xc(rho)))
    return e


def ks_egrad(model, X):
    return ks_hamiltonian_apply(model, X, X)


def ks_response_apply(model, X, U):
    """R(X)[U] = Diag((L^+ + eps_xc'') (2 (X o U) e)) X."""
    drho = 2.0 * np.einsum("ij,ij->i", X, U)
    v = model.lpinv(drho) if model.hartree else np.zeros_like(drho)
    if model.xc == "simple":
        v = v + dmu_xc(model.density(X)) * drho
    return v[:, None] * X


def ks_hess_apply(model, X, U):
    return ks_hamiltonian_apply(model, X, U) + ks_response_apply(model, X, U)


def ks_value_and_grad(model, X):
    return ks_energy(model, X), ks_egrad(model, X)


def ks_objective(model, split="kinetic"):
    """SplitObjective for E_ks.

    split "kinetic": H^c = 1/2 L + projectors, H^e = the density-dependent rest.
    split "exact": H^c is the whole Hessian and there is no H^e.
    The initial operator E0 is the local potential, applied directly.
    """
    c = model.counter

    def vg(X):
        c.add_cheap(X.shape[1])
        c.add_expensive(X.shape[1])
        return ks_value_and_grad(model, X)

    if split == "kinetic":
        def hc(X, U):
            c.add_cheap(U.shape[1])
            return model.kinetic_nonlocal_apply(U)

        def he(X, U):
            c.add_expensive(U.shape[1])
            return model.local_potential(X)[:, None] * U + ks_response_apply(model, X, U)

        def e0(X, U):
            return model.local_potential(X)[:, None] * U
    elif split == "exact":
        def hc(X, U):
            c.add_cheap(U.shape[1])
            return ks_hess_apply(model, X, U)

        he = None
        e0 = None
    else:
        raise ValueError(f"unknown KS split {split!r}")

    def ham(X, U):
        c.add_cheap(U.shape[1])
        return ks_hamiltonian_apply(model, X, U)

    return SplitObjective(vg, hc, he, e0_apply=e0, e0_nystrom=False,
                          hamiltonian_apply=ham, counter=c, name=f"ks1d(n={model.n})")
