"""Closed-form extrapolation-uncertainty formulas and concentration bounds.

Everything here is an exact (or quadrature-evaluated) analytic quantity
used to validate empirical runs: the median/mean/distributional
extrapolation uncertainties of a uniformly L-Lipschitz monotone model
class and the corresponding gains over pointwise regression, the exact
conditional mean/quantiles of the quadratic pre-additive-noise model,
and the DKW-based Cramer-distance and quantile-gap bounds.

The gain formulas assume symmetric noise with bounded support
[-eta_max, eta_max]; the unbounded Gaussian kind exists for simulation
compatibility and is rejected here with a domain error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm as _norm

from .errors import DomainError


@dataclass(frozen=True)
class NoiseDist:
    """Symmetric noise law with evaluable cdf, quantile and second moment.

    Kinds: ``uniform`` on [-eta_max, eta_max]; ``trunc_gauss`` with base
    scale ``sd`` truncated to [-eta_max, eta_max]; ``gauss`` (unbounded,
    eta_max = inf).
    """

    kind: str
    eta_max: float
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "trunc_gauss", "gauss"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.kind != "gauss" and not self.eta_max > 0:
            raise DomainError("eta_max must be positive")
        if self.kind != "uniform" and not self.sd > 0:
            raise DomainError("sd must be positive")

    @staticmethod
    def uniform(eta_max):
        return NoiseDist(kind="uniform", eta_max=float(eta_max))

    @staticmethod
    def truncated_gaussian(sd, eta_max):
        return NoiseDist(kind="trunc_gauss", eta_max=float(eta_max), sd=float(sd))

    @staticmethod
    def gaussian(sd):
        return NoiseDist(kind="gauss", eta_max=math.inf, sd=float(sd))

    @property
    def bounded(self):
        return math.isfinite(self.eta_max)

    def _trunc_mass(self):
        return 2.0 * _norm.cdf(self.eta_max / self.sd) - 1.0

    def cdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "uniform":
            return np.clip((t + self.eta_max) / (2.0 * self.eta_max), 0.0, 1.0)
        if self.kind == "trunc_gauss":
            lo = _norm.cdf(-self.eta_max / self.sd)
            raw = (_norm.cdf(t / self.sd) - lo) / self._trunc_mass()
            return np.clip(raw, 0.0, 1.0)
        return _norm.cdf(t / self.sd)

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "uniform":
            inside = np.abs(t) <= self.eta_max
            return np.where(inside, 1.0 / (2.0 * self.eta_max), 0.0)
        if self.kind == "trunc_gauss":
            inside = np.abs(t) <= self.eta_max
            return np.where(inside, _norm.pdf(t / self.sd) / (self.sd * self._trunc_mass()), 0.0)
        return _norm.pdf(t / self.sd) / self.sd

    def quantile(self, alpha):
        alpha = np.asarray(alpha, dtype=np.float64)
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise DomainError("quantile level outside [0, 1]")
        if self.kind == "uniform":
            return -self.eta_max + 2.0 * self.eta_max * alpha
        if self.kind == "trunc_gauss":
            lo = _norm.cdf(-self.eta_max / self.sd)
            return self.sd * _norm.ppf(lo + alpha * self._trunc_mass())
        return self.sd * _norm.ppf(alpha)

    def second_moment(self):
        if self.kind == "uniform":
            return self.eta_max**2 / 3.0
        if self.kind == "trunc_gauss":
            c = self.eta_max / self.sd
            return self.sd**2 * (1.0 - 2.0 * c * _norm.pdf(c) / self._trunc_mass())
        return self.sd**2

    def integrate(self, f, lo, hi):
        """Adaptive quadrature of f(eta) dF(eta) over [lo, hi], abs tol 1e-12."""
        lo = max(lo, -self.eta_max) if self.bounded else lo
        hi = min(hi, self.eta_max) if self.bounded else hi
        if lo >= hi:
            return 0.0
        val, err = integrate.quad(
            lambda e: f(e) * float(self.pdf(e)), lo, hi, epsabs=1e-12, limit=200
        )
        if not np.isfinite(val) or err > 1e-8:
            raise DomainError(f"quadrature did not converge (err={err:g})")
        return val


def _require_bounded(noise):
    if not noise.bounded:
        raise DomainError("this oracle needs bounded noise (finite eta_max)")


def median_uncertainty_gain(lip, eta_max, delta):
    """Median-prediction uncertainties and gain, (U_eng, U_l1, gain).

    U_eng = L(delta - eta_max)_+, U_l1 = L*delta, gain = L*min(delta, eta_max).
    """
    if lip <= 0 or eta_max <= 0 or delta <= 0:
        raise DomainError("L, eta_max and delta must be positive")
    u_eng = lip * max(delta - eta_max, 0.0)
    u_base = lip * delta
    gain = lip * min(delta, eta_max)
    return u_eng, u_base, gain


def mean_uncertainty_gain(lip, noise, delta):
    """Mean-prediction uncertainties and gain, (U_eng, U_l2, gain).

    U_eng integrates (eta - eta_max + delta) over the top delta-slice of
    the noise law; the gain adds the complementary mass term
    L*delta*F(eta_max - delta) to the slice integral of (eta_max - eta).
    """
    if lip <= 0 or delta <= 0:
        raise DomainError("L and delta must be positive")
    _require_bounded(noise)
    em = noise.eta_max
    u_eng = lip * noise.integrate(lambda e: e - em + delta, em - delta, em)
    u_base = lip * delta
    gain = lip * delta * float(noise.cdf(em - delta)) + lip * noise.integrate(
        lambda e: em - e, em - delta, em
    )
    return u_eng, u_base, gain


def dist_uncertainty_gain(lip, noise, delta, ell):
    """Wasserstein-ell distributional uncertainties and gain, (U_eng, U_qr, gain).

    U_eng = L * (integral of (eta - eta_max + delta)^ell dF)^(1/ell) with
    the ell = inf limit equal to L*delta exactly; U_qr = L*delta.
    """
    if lip <= 0 or delta <= 0:
        raise DomainError("L and delta must be positive")
    if not (ell >= 1):
        raise DomainError("Wasserstein order ell must be >= 1 (or inf)")
    _require_bounded(noise)
    em = noise.eta_max
    u_base = lip * delta
    if math.isinf(ell):
        u_eng = lip * delta
    else:
        # integrand rescaled to [0, 1] so large ell cannot overflow
        moment = noise.integrate(
            lambda e: ((e - em + delta) / delta) ** ell, em - delta, em
        )
        u_eng = lip * delta * moment ** (1.0 / ell)
    return u_eng, u_base, u_base - u_eng


def quadratic_truth(beta, noise, x, alpha=None):
    """Exact conditional functionals of the quadratic pre-ANM.

    For Y = b0 + b1(x+eta) + b2(x+eta)^2 with symmetric noise and
    b1*b2 > 0 (monotone branch over the support), returns a dict with
    the conditional ``mean``, ``median`` and, when ``alpha`` is given,
    the ``quantile`` b0 + b1 x + b2 x^2 + (b1 + 2 b2 x) Q + b2 Q^2.
    """
    b0, b1, b2 = (float(v) for v in beta)
    base = b0 + b1 * x + b2 * x * x
    out = {
        "mean": base + b2 * noise.second_moment(),
        "median": base,
    }
    if alpha is not None:
        q = float(noise.quantile(alpha))
        out["quantile"] = base + (b1 + 2.0 * b2 * x) * q + b2 * q * q
    return out


def dkw_cramer_bound(support_length, confidence_delta, n):
    """High-probability Cramer-distance bound nu * log(2/delta) / (2n)."""
    if support_length <= 0:
        raise DomainError("support length must be positive")
    if not 0.0 < confidence_delta < 1.0:
        raise DomainError("confidence delta must lie in (0, 1)")
    if n < 1:
        raise DomainError("sample size must be >= 1")
    return support_length * math.log(2.0 / confidence_delta) / (2.0 * n)


def quantile_gap_bound(cramer_dist, density_lb):
    """Uniform quantile-gap bound (3 * CD / b^2)^(1/3)."""
    if cramer_dist < 0:
        raise DomainError("Cramer distance must be nonnegative")
    if density_lb <= 0:
        raise DomainError("density lower bound must be positive")
    return (3.0 * cramer_dist / density_lb**2) ** (1.0 / 3.0)
