"""Objective container with a cheap/expensive Hessian split and counters."""

import threading
import zlib

import numpy as np


class ApplyCounter:
    """Thread-safe tallies of operator applications, in columns.

    Applying an operator to an n x p block counts as p.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.cheap = 0
        self.expensive = 0

    def add_cheap(self, cols):
        with self._lock:
            self.cheap += int(cols)

    def add_expensive(self, cols):
        with self._lock:
            self.expensive += int(cols)

    def snapshot(self):
        return self.cheap, self.expensive

    def reset(self):
        with self._lock:
            self.cheap = self.expensive = 0

    def __repr__(self):
        return f"ApplyCounter(cheap={self.cheap}, expensive={self.expensive})"


def rng_stream(seed, name):
    """Independent Philox stream for ``name`` derived from one integer seed."""
    key = zlib.crc32(name.encode())
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), key])))


class SplitObjective:
    """A smooth objective f with Euclidean Hessian split into H^c + H^e.

    Parameters
    ----------
    value_and_grad : callable X -> (f, G)
    hc_apply : callable (X, U) -> H^c(X)[U], the part kept exactly.
    he_apply : callable (X, U) -> H^e(X)[U] or None.
    e0_apply : callable (X, U) -> initial approximation of H^e(X)[U] or None.
    e0_nystrom : whether drivers should compress ``e0_apply`` on a subspace
        rather than apply it directly.
    hamiltonian_apply : callable (X, U) -> H(X) U for models whose stationary
        points solve H(X) X = X Lambda; used to enrich refinement subspaces.
    counter : the ApplyCounter the callables report to.
    """

    def __init__(self, value_and_grad, hc_apply, he_apply=None, e0_apply=None,
                 e0_nystrom=True, hamiltonian_apply=None, counter=None, name=""):
        self._vg = value_and_grad
        self._hc = hc_apply
        self._he = he_apply
        self.e0_apply = e0_apply
        self.e0_nystrom = e0_nystrom
        self.hamiltonian_apply = hamiltonian_apply
        self.counter = counter if counter is not None else ApplyCounter()
        self.name = name

    def value_and_grad(self, X):
        return self._vg(X)

    def f(self, X):
        return self._vg(X)[0]

    def egrad(self, X):
        return self._vg(X)[1]

    def hc_apply(self, X, U):
        return self._hc(X, U)

    @property
    def has_he(self):
        return self._he is not None

    def he_apply(self, X, U):
        if self._he is None:
            raise NotImplementedError(f"{self.name or 'objective'} has no expensive Hessian part")
        return self._he(X, U)

    def hess_apply(self, X, U):
        """Full Euclidean Hessian H^c + H^e (just H^c when there is no H^e)."""
        if self._he is None:
            return self.hc_apply(X, U)
        return self.hc_apply(X, U) + self.he_apply(X, U)
