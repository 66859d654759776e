"""Acceptance test and regularization-parameter schedule."""

from dataclasses import dataclass, replace

import numpy as np

from ..kernels import EPS

TAU_MIN = 1e-12
TAU_MAX = 1e12


@dataclass(frozen=True)
class RegularizationPolicy:
    """Trust-region style state: current tau plus the fixed thresholds.

    ``tau=None`` means "pick from the first gradient" (``tau0_scale * ||grad||``).
    """

    tau: float = None
    eta1: float = 0.01
    eta2: float = 0.9
    gamma0: float = 0.5
    gamma1: float = 2.0
    gamma2: float = 4.0
    tau0_scale: float = 1e-2

    def __post_init__(self):
        if not 0 < self.eta1 <= self.eta2 < 1:
            raise ValueError("need 0 < eta1 <= eta2 < 1")
        if not 0 < self.gamma0 < 1:
            raise ValueError("need 0 < gamma0 < 1")
        if not 1 < self.gamma1 <= self.gamma2:
            raise ValueError("need 1 < gamma1 <= gamma2")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")

    def initialized(self, gradnorm):
        if self.tau is not None:
            return self
        tau = float(np.clip(self.tau0_scale * gradnorm, TAU_MIN, TAU_MAX))
        return replace(self, tau=tau)

    def next_tau(self, r):
        if r >= self.eta2:
            t = self.gamma0 * self.tau
        elif r >= self.eta1:
            t = self.gamma1 * self.tau
        else:
            t = self.gamma2 * self.tau
        return float(np.clip(t, TAU_MIN, TAU_MAX))


def ratio(f_new, f_old, m_val):
    """Actual over predicted reduction; -inf when the model predicts no decrease."""
    if not np.isfinite(f_new) or m_val >= -1e-16 * max(1.0, abs(f_old)):
        return -np.inf
    return (f_new - f_old) / m_val


def noise_level_change(f_new, f_old, m_val, factor=1e3):
    """True when actual and predicted changes are within round-off of f."""
    lvl = factor * EPS * max(1.0, abs(f_old))
    return abs(f_new - f_old) <= lvl and abs(m_val) <= lvl


def accept_and_update_tau(policy, r, Xk, Z):
    """Return (X_next, accepted, policy with updated tau)."""
    accepted = bool(r >= policy.eta1)
    return (Z if accepted else Xk), accepted, replace(policy, tau=policy.next_tau(r))
