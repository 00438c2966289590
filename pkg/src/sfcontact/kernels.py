"""Pairwise connection probabilities and the degree profile they induce.

Every variant is nonincreasing in both marks and in distance; the accelerated
sampler relies on that to build envelopes from band minima.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numba
import numpy as np
from scipy import integrate


class Variant(str, Enum):
    SOFT_BOOLEAN = "SoftBoolean"
    AGE_RCM = "AgeRCM"
    PREF_ATTACH_UPPER = "PrefAttachUpper"
    MIN_LOWER = "MinLower"


_CODES = {
    Variant.SOFT_BOOLEAN: 0,
    Variant.AGE_RCM: 1,
    Variant.PREF_ATTACH_UPPER: 2,
    Variant.MIN_LOWER: 3,
}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and its constants.

    ``dim`` is the spatial dimension the kernel is evaluated in. ``constant``
    overrides the kernel with p identically equal to that value; it exists for
    planted fixtures and degenerate checks.
    """

    variant: Variant = Variant.PREF_ATTACH_UPPER
    gamma: float = 0.8
    delta: float = 2.0
    alpha: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    beta_scale: float = 1.0
    dim: int = 1
    constant: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.delta > 1.0:
            raise ValueError(f"delta must exceed 1, got {self.delta}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("kappa1", "kappa2", "beta_scale"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if self.constant is not None and not 0.0 <= self.constant <= 1.0:
            raise ValueError("constant override must lie in [0, 1]")

    @property
    def ultrasmall(self):
        return self.gamma > self.delta / (self.delta + 1.0)

    @property
    def code(self):
        return _CODES[self.variant]

    def packed(self):
        """Float parameter vector consumed by the compiled kernel."""
        const = -1.0 if self.constant is None else float(self.constant)
        return np.array(
            [self.gamma, self.delta, self.alpha, self.kappa1, self.kappa2,
             self.beta_scale, float(self.dim), const],
            dtype=np.float64,
        )


@numba.njit(cache=True)
def kernel_value(code, prm, t, s, r):
    """Compiled connection probability; see :func:`connection_probability`."""
    if prm[7] >= 0.0:
        return prm[7]
    g = prm[0]
    dl = prm[1]
    d = prm[6]
    lo = min(t, s)
    hi = max(t, s)
    if r <= 0.0:
        return prm[2] if code == 3 else 1.0
    if code == 0:
        rad = t ** (-g / d) + s ** (-g / d)
        x = (r / rad) ** (-dl * d)
    elif code == 1:
        x = (lo ** g * hi ** (1.0 - g) * r ** d / prm[5]) ** (-dl)
    elif code == 2:
        x = prm[4] * lo ** (-dl * g) * hi ** (dl * (g - 1.0)) * r ** (-dl * d)
    else:
        x = prm[3] * lo ** (-dl * g) * r ** (-dl * d)
        return prm[2] * min(1.0, x)
    return min(1.0, x)


@numba.njit(cache=True)
def _kernel_many(code, prm, t, s, r, out):
    for i in range(t.shape[0]):
        out[i] = kernel_value(code, prm, t[i], s[i], r[i])


def connection_probability(spec, t, s, dist):
    """Edge probability for marks ``t``, ``s`` at distance ``dist``.

    Broadcasts over array arguments. Variants, with m = t∧s and M = t∨s:

    - MinLower: α(1 ∧ κ1 m^{-δγ} r^{-δd})
    - PrefAttachUpper: 1 ∧ κ2 m^{-δγ} M^{δ(γ-1)} r^{-δd}
    - AgeRCM: 1 ∧ (β^{-1} m^γ M^{1-γ} r^d)^{-δ}
    - SoftBoolean: 1 ∧ (r / (t^{-γ/d} + s^{-γ/d}))^{-δd}
    """
    t, s, dist = np.broadcast_arrays(
        np.asarray(t, dtype=np.float64),
        np.asarray(s, dtype=np.float64),
        np.asarray(dist, dtype=np.float64),
    )
    shape = t.shape
    out = np.empty(t.size, dtype=np.float64)
    _kernel_many(spec.code, spec.packed(), np.ravel(t), np.ravel(s), np.ravel(dist), out)
    return out.reshape(shape) if shape else float(out[0])


def calibrated_constants(spec):
    """(alpha, kappa1, kappa2) for which the lower/upper forms sandwich ``spec``."""
    dl, d = spec.delta, spec.dim
    if spec.variant is Variant.SOFT_BOOLEAN:
        return 1.0, 1.0, 2.0 ** (dl * d)
    if spec.variant is Variant.AGE_RCM:
        b = spec.beta_scale ** dl
        return min(1.0, b), b, b
    if spec.variant is Variant.PREF_ATTACH_UPPER:
        return 1.0, spec.kappa2, spec.kappa2
    return spec.alpha, spec.kappa1, spec.alpha * spec.kappa1


class SandwichViolation(ValueError):
    def __init__(self, t, s, dist, lower, p, upper):
        self.triple = (float(t), float(s), float(dist))
        super().__init__(
            f"sandwich fails at (t, s, dist) = {self.triple}: "
            f"lower={lower!r}, p={p!r}, upper={upper!r}"
        )


def assumption_sandwich(spec, t, s, dist, constants=None):
    """Lower and upper envelopes around :func:`connection_probability`.

    Lower = α(1 ∧ κ1 m^{-δγ} r^{-δd}); upper = 1 ∧ κ2 m^{-δγ} M^{δ(γ-1)} r^{-δd}.

    Parameters
    ----------
    constants : tuple, optional
        (alpha, kappa1, kappa2); defaults to the variant's calibrated values.

    Raises
    ------
    SandwichViolation
        At the first (t, s, dist) where lower ≤ p ≤ upper fails.
    """
    a, k1, k2 = calibrated_constants(spec) if constants is None else constants
    t, s, dist = np.broadcast_arrays(
        np.asarray(t, dtype=np.float64),
        np.asarray(s, dtype=np.float64),
        np.asarray(dist, dtype=np.float64),
    )
    g, dl, d = spec.gamma, spec.delta, spec.dim
    lo, hi = np.minimum(t, s), np.maximum(t, s)
    with np.errstate(divide="ignore"):
        rpow = dist ** (-dl * d)
    lower = a * np.minimum(1.0, k1 * lo ** (-dl * g) * rpow)
    upper = np.minimum(1.0, k2 * lo ** (-dl * g) * hi ** (dl * (g - 1.0)) * rpow)
    p = np.asarray(connection_probability(spec, t, s, dist))
    # tiny slack for the rounding of the pow chain; violations from bad constants are O(1)
    bad = (lower > p * (1 + 1e-12)) | (p > upper * (1 + 1e-12))
    if np.any(bad):
        i = np.flatnonzero(bad.ravel())[0]
        raise SandwichViolation(
            t.ravel()[i], s.ravel()[i], dist.ravel()[i],
            lower.ravel()[i], p.ravel()[i], upper.ravel()[i],
        )
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def unit_ball_volume(d):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def radial_kink(spec, t, s):
    """Value u0 of u = dist^d where the kernel leaves its capped region."""
    g, dl, d = spec.gamma, spec.delta, spec.dim
    lo, hi = min(t, s), max(t, s)
    if spec.variant is Variant.SOFT_BOOLEAN:
        return (t ** (-g / d) + s ** (-g / d)) ** d
    if spec.variant is Variant.AGE_RCM:
        return spec.beta_scale * lo ** (-g) * hi ** (g - 1.0)
    if spec.variant is Variant.PREF_ATTACH_UPPER:
        return spec.kappa2 ** (1.0 / dl) * lo ** (-g) * hi ** (g - 1.0)
    return spec.kappa1 ** (1.0 / dl) * lo ** (-g)


def _radial_integral(spec, t, s):
    # ∫_{R^d} p(t, s, |x|) dx = V_d ∫_0^∞ p(t, s, u^{1/d}) du
    d = spec.dim
    u0 = radial_kink(spec, t, s)
    f = lambda u: connection_probability(spec, t, s, u ** (1.0 / d))
    inner, _ = integrate.quad(f, 0.0, u0, epsabs=0.0, epsrel=1e-12)
    # beyond the kink substitute u = u0 e^y so the power-law tail decays exponentially
    g = lambda y: f(u0 * math.exp(y)) * u0 * math.exp(y) if y < 600.0 else 0.0
    tail, _ = integrate.quad(g, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return unit_ball_volume(d) * (inner + tail)


def expected_degree_profile(spec, t):
    """Λ(t) = ∫_0^1 ds ∫_{R^d} p(t, s, |x|) dx by nested quadrature.

    The radial integral is split at the kink of the cap; the mark integral runs
    in log s with a breakpoint at log t.
    """
    if spec.constant is not None and spec.constant > 0:
        raise ValueError("constant kernel has infinite expected degree")
    if not spec.delta > 1.0:
        raise ValueError("delta <= 1 makes the degree integral diverge")
    if not 0.0 < t < 1.0:
        raise ValueError("mark must lie in (0, 1)")
    h = lambda w: _radial_integral(spec, t, math.exp(w)) * math.exp(w)
    lt = math.log(t)
    # below s = t the integrand decays like e^{(1-γ)(w - log t)}; cut at relative 1e-17
    w_min = lt - 40.0 / (1.0 - spec.gamma)
    left, _ = integrate.quad(h, w_min, lt, epsabs=0.0, epsrel=1e-10, limit=200)
    right, _ = integrate.quad(h, lt, 0.0, epsabs=0.0, epsrel=1e-10, limit=200)
    return left + right


def compute_I_rho(d, delta, kappa2):
    """∫_{R^d} ρ(κ2 |x|^d) dx with ρ(x) = 1 ∧ x^{-δ}, by radial quadrature."""
    if not delta > 1.0:
        raise ValueError(f"delta must exceed 1 for integrability, got {delta}")
    if not kappa2 > 0.0:
        raise ValueError("kappa2 must be positive")
    u0 = 1.0 / kappa2
    inner = u0
    # with u = u0 e^y the tail integrand is u0 e^{(1-δ)y}
    tail, _ = integrate.quad(
        lambda y: u0 * math.exp((1.0 - delta) * y),
        0.0, math.inf, epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return unit_ball_volume(d) * (inner + tail)
