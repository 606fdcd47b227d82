"""Built-in radial profile families.

A profile supplies g(r) for GS coefficient fields a = I + g(r)θθᵀ, its
logarithmic form g̃(t) = g(e^{-t}) with the closed-form derivative, and a
dominating modulus of continuity. The same profile also describes a radial
boundary graph x_n = H(|x̃|) whose slope H' carries the family's decay.

Families, with L = 1 - log r and ℓ = -log r:

    zero     g = 0
    power    g = c r^γ                   H = c r^γ
    logpow   g = s c L^{-α}              H = s c r L^{-α}
    sinlog   g = c sin(ℓ) L^{-α}         H = c r sin(ℓ) L^{-α}
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from shared.types import ProfileFamily, ProfileSpec

FloatArray = NDArray[np.float64]
Modulus = Callable[[FloatArray], FloatArray]


def _radius(r: ArrayLike) -> FloatArray:
    # profiles are extended by their value at r = 1
    return np.minimum(np.asarray(r, dtype=float), 1.0)


def _log_scale(r: FloatArray) -> FloatArray:
    with np.errstate(divide="ignore"):
        return 1.0 - np.log(r)


@dataclass(frozen=True)
class RadialProfile:
    family: ProfileFamily = ProfileFamily.ZERO
    c: float = 1.0
    gamma: float = 0.5
    alpha: float = 0.75
    sign: int = 1

    @classmethod
    def from_spec(cls, spec: ProfileSpec) -> "RadialProfile":
        return cls(
            family=spec.family, c=spec.c, gamma=spec.gamma, alpha=spec.alpha, sign=spec.sign
        )

    @property
    def label(self) -> str:
        f = self.family
        if f == ProfileFamily.ZERO:
            return "zero"
        if f == ProfileFamily.POWER:
            return f"power(c={self.c:g}, gamma={self.gamma:g})"
        if f == ProfileFamily.LOGPOW:
            return f"logpow(c={self.c:g}, alpha={self.alpha:g}, sign={self.sign:+d})"
        return f"sinlog(c={self.c:g}, alpha={self.alpha:g})"

    @property
    def amplitude(self) -> float:
        """Signed leading constant; |amplitude| = ω(1) of the modulus."""
        return self.sign * self.c if self.family == ProfileFamily.LOGPOW else self.c

    # --- coefficient profile ------------------------------------------------

    def g(self, r: ArrayLike) -> FloatArray:
        r = _radius(r)
        f = self.family
        if f == ProfileFamily.ZERO:
            return np.zeros_like(r)
        if f == ProfileFamily.POWER:
            return self.c * np.power(r, self.gamma)
        big_l = _log_scale(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            decay = np.where(r > 0.0, np.power(big_l, -self.alpha), 0.0)
            if f == ProfileFamily.LOGPOW:
                return self.amplitude * decay
            return np.where(r > 0.0, self.c * np.sin(big_l - 1.0) * decay, 0.0)

    def g_tilde(self, t: ArrayLike) -> FloatArray:
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        f = self.family
        if f == ProfileFamily.ZERO:
            return np.zeros_like(t)
        if f == ProfileFamily.POWER:
            return self.c * np.exp(-self.gamma * t)
        decay = (1.0 + t) ** -self.alpha
        if f == ProfileFamily.LOGPOW:
            return self.amplitude * decay
        return self.c * np.sin(t) * decay

    def dg_tilde(self, t: ArrayLike) -> FloatArray:
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        f = self.family
        if f == ProfileFamily.ZERO:
            return np.zeros_like(t)
        if f == ProfileFamily.POWER:
            return -self.gamma * self.c * np.exp(-self.gamma * t)
        a = self.alpha
        if f == ProfileFamily.LOGPOW:
            return -a * self.amplitude * (1.0 + t) ** (-a - 1.0)
        return self.c * (np.cos(t) * (1.0 + t) ** -a - a * np.sin(t) * (1.0 + t) ** (-a - 1.0))

    def modulus(self, kappa: float) -> Modulus:
        """Nondecreasing envelope of |g|, relaxed to r^{1-κ} where g decays faster."""
        c = abs(self.c)
        f = self.family
        if f == ProfileFamily.ZERO:
            return lambda r: np.zeros_like(np.asarray(r, dtype=float))
        if f == ProfileFamily.POWER:
            e = min(self.gamma, 1.0 - kappa)
            return lambda r: c * np.power(_radius(r), e)
        a = self.alpha
        return lambda r: c * _pos_decay(_radius(r), a)

    # --- boundary graph -----------------------------------------------------

    def height(self, rho: ArrayLike) -> FloatArray:
        rho = np.asarray(rho, dtype=float)
        f = self.family
        if f == ProfileFamily.ZERO:
            return np.zeros_like(rho)
        if f == ProfileFamily.POWER:
            return self.c * np.power(rho, self.gamma)
        return rho * self.g(rho)

    def slope(self, rho: ArrayLike) -> FloatArray:
        """H'(ρ), the radial derivative of the graph height."""
        rho = np.asarray(rho, dtype=float)
        f = self.family
        if f == ProfileFamily.ZERO:
            return np.zeros_like(rho)
        if f == ProfileFamily.POWER:
            with np.errstate(divide="ignore"):
                return np.where(
                    rho > 0.0, self.c * self.gamma * np.power(rho, self.gamma - 1.0), 0.0
                )
        a = self.alpha
        big_l = _log_scale(np.maximum(rho, 1.0e-300))
        lead = big_l**-a
        tail = a * big_l ** (-a - 1.0)
        if f == ProfileFamily.LOGPOW:
            out = self.amplitude * (lead + tail)
        else:
            ell = big_l - 1.0
            out = self.c * ((np.sin(ell) - np.cos(ell)) * lead + np.sin(ell) * tail)
        return np.where(rho > 0.0, out, 0.0)

    def slope_modulus(self, kappa: float) -> Modulus:
        c = abs(self.c)
        f = self.family
        if f == ProfileFamily.ZERO:
            return lambda r: np.zeros_like(np.asarray(r, dtype=float))
        if f == ProfileFamily.POWER:
            e = min(self.gamma - 1.0, 1.0 - kappa)
            return lambda r: c * self.gamma * np.power(_radius(r), e)
        a = self.alpha
        lead = 1.0 if f == ProfileFamily.LOGPOW else float(np.sqrt(2.0))
        return lambda r: c * (
            lead * _pos_decay(_radius(r), a) + a * _pos_decay(_radius(r), a + 1.0)
        )


def _pos_decay(r: FloatArray, a: float) -> FloatArray:
    """L^{-a} with the limit 0 at r = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(r > 0.0, np.power(_log_scale(np.maximum(r, 1.0e-300)), -a), 0.0)


def builtin_profiles() -> dict[str, RadialProfile]:
    """Named profiles used in configs, docs and the test suite."""
    return {
        "zero": RadialProfile(ProfileFamily.ZERO),
        "sqrt": RadialProfile(ProfileFamily.POWER, c=1.0, gamma=0.5),
        "logpow+": RadialProfile(ProfileFamily.LOGPOW, c=1.0, alpha=0.75, sign=1),
        "logpow-": RadialProfile(ProfileFamily.LOGPOW, c=1.0, alpha=0.75, sign=-1),
        "sinlog": RadialProfile(ProfileFamily.SINLOG, c=0.1, alpha=1.0),
    }
