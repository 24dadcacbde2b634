"""Synthetic data generators with full access to the generating truth.

Each setting draws covariates on a bounded support and responses from a
known mechanism (pre-additive noise for the named curve settings, a
two-point quadratic design for the finite-sample experiments, and a
post-additive variant for the misspecification study).  A
:class:`TruthHandle` rides along with every data set and evaluates the
true conditional median, mean and quantiles so fits can be scored
against analytic ground truth.

Curve settings (trained on X up to x_max = 2, Gaussian noise):

* ``softplus``  g(x) = log(1 + e^x),        X ~ Unif[-2, 2], sd 1
* ``square``    g(x) = max(x, 0)^2 / 2,     X ~ Unif[0, 2],  sd 1
* ``cubic``     g(x) = x^3 / 3,             X ~ Unif[-2, 2], sd 1.1
* ``log``       linear ramp joining log(1+x) smoothly at x = 2,
                                            X ~ Unif[0, 2],  sd 1

With unbounded Gaussian noise the effective noise range used by the
extrapolation-band oracles is eta_max ~= 2 * sd (the 97.5% quantile).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _norm

from . import oracle
from .core import Rng, empirical_quantile
from .errors import DomainError, ShapeError

CURVE_KINDS = ("softplus", "square", "cubic", "log")
TWO_POINT_KINDS = ("quadratic_two_point", "quadratic_postanm_misspec")
ALL_KINDS = CURVE_KINDS + TWO_POINT_KINDS + ("pre_post_anm",)

_CURVE_DEFAULTS = {
    # kind: (x_low, x_high, noise_sd)
    "softplus": (-2.0, 2.0, 1.0),
    "square": (0.0, 2.0, 1.0),
    "cubic": (-2.0, 2.0, 1.1),
    "log": (0.0, 2.0, 1.0),
}

_ORACLE_SEED = 202406


def g_star(kind, x):
    """True curve of a named setting, vectorized over x."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "softplus":
        return np.logaddexp(0.0, x)
    if kind == "square":
        return 0.5 * np.maximum(x, 0.0) ** 2
    if kind == "cubic":
        return x**3 / 3.0
    if kind == "log":
        # linear below the boundary, log(1 + x) above; C^1 at x = 2
        return np.where(x <= 2.0, (x - 2.0) / 3.0 + math.log(3.0), np.log1p(np.maximum(x, 2.0)))
    raise DomainError(f"unknown curve kind {kind!r}")


@dataclass(frozen=True)
class SimSetting:
    """A synthetic scenario; parameters default to the standard table."""

    kind: str
    noise_sd: float = None          # curve kinds: Gaussian noise sd
    beta: tuple = (0.5, 1.0, 1.0)   # two-point kinds: quadratic coefficients
    x1: float = 1.0                 # two-point design values
    x2: float = 2.0
    eta_max: float = 0.5            # two-point kinds: uniform noise half-width
    xi_sd: float = 0.5              # pre_post_anm: post-noise sd

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise DomainError(f"unknown setting kind {self.kind!r}")
        if self.kind == "quadratic_two_point" and self.beta[1] * self.beta[2] <= 0:
            raise DomainError("two-point quadratic design needs beta1 * beta2 > 0")
        if self.kind in TWO_POINT_KINDS:
            if not self.x1 < self.x2:
                raise DomainError("need x1 < x2")
            if self.eta_max <= 0:
                raise DomainError("eta_max must be positive")

    @property
    def sd(self):
        if self.noise_sd is not None:
            return self.noise_sd
        if self.kind in _CURVE_DEFAULTS:
            return _CURVE_DEFAULTS[self.kind][2]
        return None

    @property
    def x_range(self):
        if self.kind in _CURVE_DEFAULTS:
            lo, hi, _ = _CURVE_DEFAULTS[self.kind]
            return lo, hi
        if self.kind in TWO_POINT_KINDS:
            return self.x1, self.x2
        return -2.0, 2.0

    @property
    def x_max(self):
        return self.x_range[1]

    @property
    def effective_eta_max(self):
        """Noise range feeding the extrapolation-band oracles.

        Exact for the bounded two-point designs; for unbounded Gaussian
        noise the 97.5% quantile ~= 2 * sd is used.
        """
        if self.kind in TWO_POINT_KINDS:
            return self.eta_max
        return 2.0 * self.sd


@dataclass
class TruthHandle:
    """Evaluates the true conditional functionals of a setting."""

    setting: SimSetting
    _eta: np.ndarray = field(default=None, repr=False)
    _xi: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        rng = Rng(_ORACLE_SEED)
        s = self.setting
        if s.kind in CURVE_KINDS:
            self._eta = s.sd * rng.normal(size=100_000)
        elif s.kind == "pre_post_anm":
            self._eta = 0.5 * rng.normal(size=100_000)
            self._xi = s.xi_sd * rng.normal(size=100_000)

    def g(self, x):
        s = self.setting
        if s.kind in CURVE_KINDS:
            return g_star(s.kind, x)
        b0, b1, b2 = s.beta
        x = np.asarray(x, dtype=np.float64)
        return b0 + b1 * x + b2 * x * x

    def median(self, x):
        """True conditional median (symmetric noise has median 0)."""
        s = self.setting
        x = np.asarray(x, dtype=np.float64)
        if s.kind == "pre_post_anm":
            return self._mc_quantile(x, 0.5)
        return self.g(x)

    def mean(self, x):
        """True conditional mean; Monte Carlo for the curve settings."""
        s = self.setting
        x = np.asarray(x, dtype=np.float64)
        if s.kind in CURVE_KINDS:
            return self._mc_mean(x)
        if s.kind == "quadratic_two_point":
            noise = oracle.NoiseDist.uniform(s.eta_max)
            b0, b1, b2 = s.beta
            return self.g(x) + b2 * noise.second_moment()
        if s.kind == "quadratic_postanm_misspec":
            return self.g(x)
        # pre-post: quadratic pre-noise (sd 0.5) plus symmetric post-noise
        b0, b1, b2 = s.beta
        return self.g(x) + b2 * 0.25

    def quantile(self, x, alpha):
        """True conditional alpha-quantile."""
        s = self.setting
        x = np.asarray(x, dtype=np.float64)
        if s.kind in CURVE_KINDS:
            return g_star(s.kind, x + s.sd * _norm.ppf(alpha))
        if s.kind == "quadratic_two_point":
            noise = oracle.NoiseDist.uniform(s.eta_max)
            q = oracle.quadratic_truth(s.beta, noise, x, alpha=alpha)
            return q["quantile"]
        if s.kind == "quadratic_postanm_misspec":
            return self.g(x) + s.eta_max * (2.0 * alpha - 1.0)
        return self._mc_quantile(x, alpha)

    def _mc_mean(self, x):
        out = np.empty(x.size)
        flat = x.ravel()
        for start in range(0, flat.size, 256):
            seg = flat[start : start + 256]
            out[start : start + 256] = g_star(
                self.setting.kind, seg[:, None] + self._eta[None, :]
            ).mean(axis=1)
        return out.reshape(x.shape)

    def _mc_quantile(self, x, alpha):
        s = self.setting
        flat = np.atleast_1d(x).ravel()
        out = np.empty(flat.size)
        for i, xi in enumerate(flat):
            draws = self.g(xi + self._eta) + self._xi
            out[i] = empirical_quantile(draws, alpha)
        return out.reshape(np.shape(x)) if np.ndim(x) else float(out[0])


def make_truth(setting):
    return TruthHandle(setting)


def _mechanism(setting, x, rng):
    """Draw Y | X = x from the true mechanism."""
    s = setting
    n = x.shape[0]
    if s.kind in CURVE_KINDS:
        return g_star(s.kind, x + s.sd * rng.normal(size=n))
    b0, b1, b2 = s.beta
    if s.kind == "quadratic_two_point":
        eta = s.eta_max * (2.0 * rng.uniform(n) - 1.0)
        z = x + eta
        return b0 + b1 * z + b2 * z * z
    if s.kind == "quadratic_postanm_misspec":
        eta = s.eta_max * (2.0 * rng.uniform(n) - 1.0)
        return b0 + b1 * x + b2 * x * x + eta
    # pre_post_anm
    z = x + 0.5 * rng.normal(size=n)
    return b0 + b1 * z + b2 * z * z + s.xi_sd * rng.normal(size=n)


def generate(setting, n, rng):
    """Sample a training set; returns (X (n,1), Y (n,1), truth handle)."""
    if n < 1:
        raise DomainError("need n >= 1")
    s = setting
    if s.kind in TWO_POINT_KINDS:
        x = np.where(rng.uniform(n) < 0.5, s.x1, s.x2)
    else:
        lo, hi = s.x_range
        x = lo + (hi - lo) * rng.uniform(n)
    y = _mechanism(s, x, rng)
    return x[:, None], y[:, None], make_truth(s)


def generate_on_range(setting, n, rng, x_range):
    """Test data: X uniform on an arbitrary range, Y from the true mechanism."""
    if n < 1:
        raise DomainError("need n >= 1")
    lo, hi = x_range
    if not lo < hi:
        raise DomainError("empty covariate range")
    x = lo + (hi - lo) * rng.uniform(n)
    y = _mechanism(setting, x, rng)
    return x[:, None], y[:, None]


def split_at_quantile(x, y, q, keep="smaller", split_dim=0):
    """Partition rows at the empirical q-quantile of one covariate.

    The kept portion (below the threshold for ``smaller``, strictly
    above for ``larger``) becomes the training set; the remainder is the
    test set, so every test point lies outside the training support
    along ``split_dim``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError("x must be (n, d) with matching y rows")
    if not 0.0 < q < 1.0:
        raise DomainError("split quantile must lie in (0, 1)")
    if keep not in ("smaller", "larger"):
        raise DomainError("keep must be 'smaller' or 'larger'")
    thr = empirical_quantile(x[:, split_dim], q)
    mask = x[:, split_dim] <= thr if keep == "smaller" else x[:, split_dim] > thr
    if not mask.any() or mask.all():
        raise DomainError("degenerate split: one partition is empty")
    return (x[mask], y[mask]), (x[~mask], y[~mask])


def noise_level_sweep(setting, sd_list, n, rng):
    """Regenerate a curve setting at several noise levels with shared X.

    Only the ``square`` and ``log`` settings take part in the sweep.
    Returns a list of (X, Y, truth) triples, one per standard deviation,
    with identical covariates across entries (paired design).
    """
    if setting.kind not in ("square", "log"):
        raise DomainError("noise sweep is defined for the square and log settings")
    if len(sd_list) == 0:
        raise DomainError("need at least one noise level")
    from dataclasses import replace

    lo, hi = setting.x_range
    x_rng, *noise_rngs = rng.split(1 + len(sd_list))
    x = lo + (hi - lo) * x_rng.uniform(n)
    out = []
    for sd, sub in zip(sd_list, noise_rngs):
        s = replace(setting, noise_sd=float(sd))
        if sd == 0:
            y = g_star(s.kind, x)
        else:
            y = g_star(s.kind, x + sd * sub.normal(size=n))
        out.append((x[:, None].copy(), y[:, None], make_truth(s)))
    return out
