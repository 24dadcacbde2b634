"""Training losses and distribution distances.

Two families live here:

* sample losses that drive training of a stochastic generator: the
  energy loss (negative energy score averaged over observations) and its
  kernel-score generalisations, each with exact gradients with respect
  to every generated sample;
* evaluation distances between sample sets: Monte-Carlo energy score /
  energy distance, the exact Cramer distance between empirical CDFs,
  CRPS, and squared MMD.

Conventions: responses ``y`` have shape (n, k); generated samples have
shape (n, m, k) with m >= 2 draws per observation.  Norms are Euclidean
over the k response coordinates.  Within-set pair means exclude the
diagonal (unbiased estimators); the subgradient of the norm at 0 is the
zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

SAMPLE_LOSS_KINDS = ("energy", "gaussian", "laplace", "imq")
POINT_LOSS_KINDS = ("l1", "l2", "pinball")


@dataclass(frozen=True)
class LossSpec:
    """Tagged choice of training loss.

    ``kind`` is one of ``energy``, ``gaussian``, ``laplace``, ``imq``
    (kernel-score losses, bandwidth ``sigma`` / offset ``c``), or the
    pointwise ``l1``, ``l2``, ``pinball`` (level ``alpha``).
    """

    kind: str = "energy"
    sigma: float = 1.0
    c: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in SAMPLE_LOSS_KINDS + POINT_LOSS_KINDS:
            raise DomainError(f"unknown loss kind {self.kind!r}")
        if self.sigma <= 0:
            raise DomainError("kernel bandwidth sigma must be positive")
        if self.c <= 0:
            raise DomainError("inverse-multiquadric offset c must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("pinball level alpha must lie in (0, 1)")

    @property
    def distributional(self):
        return self.kind in SAMPLE_LOSS_KINDS


def _as_2d(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise ShapeError(f"expected (n, k) responses, got shape {y.shape}")
    return y


def _as_3d(samples):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        samples = samples[:, :, None]
    if samples.ndim != 3:
        raise ShapeError(f"expected (n, m, k) samples, got shape {samples.shape}")
    return samples


def _check_pair(y, samples):
    y = _as_2d(y)
    samples = _as_3d(samples)
    if y.shape[0] != samples.shape[0] or y.shape[1] != samples.shape[2]:
        raise ShapeError(
            f"responses {y.shape} do not match samples {samples.shape}"
        )
    if samples.shape[1] < 2:
        raise DomainError("need m >= 2 samples per observation (spread term)")
    return y, samples


# --- kernels -----------------------------------------------------------------
# Each kernel maps difference vectors d = z - z' to k(z, z') and to the
# partial derivative of k with respect to z.  ``diffs`` has shape (..., k).


def _kernel_value(spec, diffs):
    if spec.kind == "energy":
        return -np.linalg.norm(diffs, axis=-1)
    sq = np.einsum("...i,...i->...", diffs, diffs)
    if spec.kind == "gaussian":
        return np.exp(-sq / (2.0 * spec.sigma))
    if spec.kind == "laplace":
        return np.exp(-np.sqrt(sq) / spec.sigma)
    if spec.kind == "imq":
        return 1.0 / np.sqrt(sq + spec.c)
    raise DomainError(f"{spec.kind!r} is not a kernel loss")


def _kernel_grad(spec, diffs):
    sq = np.einsum("...i,...i->...", diffs, diffs)
    if spec.kind == "energy":
        r = np.sqrt(sq)
        scale = np.zeros_like(r)
        np.divide(-1.0, r, out=scale, where=r > 0)
    elif spec.kind == "gaussian":
        scale = -np.exp(-sq / (2.0 * spec.sigma)) / spec.sigma
    elif spec.kind == "laplace":
        r = np.sqrt(sq)
        scale = np.zeros_like(r)
        np.divide(-np.exp(-r / spec.sigma), r * spec.sigma, out=scale, where=r > 0)
    elif spec.kind == "imq":
        scale = -((sq + spec.c) ** -1.5)
    else:
        raise DomainError(f"{spec.kind!r} is not a kernel loss")
    return scale[..., None] * diffs


# --- sample losses -----------------------------------------------------------


def kernel_loss_batch(y, samples, spec):
    """Empirical kernel-score loss of generated samples against responses.

    Computes (1/n) sum_i [ -(1/m) sum_j k(g_ij, y_i)
    + (1/(2m(m-1))) sum_{j != j'} k(g_ij, g_ij') ].  With the energy
    kernel k(z, z') = -||z - z'|| this is exactly the empirical energy
    loss: per-sample residual norms minus half the unbiased pairwise
    spread.
    """
    y, samples = _check_pair(y, samples)
    n, m, _ = samples.shape
    data_term = _kernel_value(spec, samples - y[:, None, :]).mean()
    pair = _kernel_value(spec, samples[:, :, None, :] - samples[:, None, :, :])
    off_diag = pair.sum(axis=(1, 2)) - np.trace(pair, axis1=1, axis2=2)
    spread_term = off_diag.sum() / (2.0 * n * m * (m - 1))
    return float(-data_term + spread_term)


def kernel_loss_grad(y, samples, spec):
    """Exact gradient of :func:`kernel_loss_batch` w.r.t. each sample."""
    y, samples = _check_pair(y, samples)
    n, m, _ = samples.shape
    grad = -_kernel_grad(spec, samples - y[:, None, :]) / (n * m)
    pair_grad = _kernel_grad(spec, samples[:, :, None, :] - samples[:, None, :, :])
    grad += pair_grad.sum(axis=2) / (n * m * (m - 1))
    return grad


_ENERGY = LossSpec(kind="energy")


def energy_loss_batch(y, samples):
    """Unbiased empirical energy loss (mean negative energy score)."""
    return kernel_loss_batch(y, samples, _ENERGY)


def energy_loss_grad(y, samples):
    """Exact gradient of the empirical energy loss w.r.t. each sample."""
    return kernel_loss_grad(y, samples, _ENERGY)


# --- pointwise losses --------------------------------------------------------


def l2_loss(y, pred):
    """Mean squared Euclidean residual norm, with gradient w.r.t. pred."""
    y, pred = _as_2d(y), _as_2d(pred)
    if y.shape != pred.shape:
        raise ShapeError(f"responses {y.shape} do not match predictions {pred.shape}")
    resid = pred - y
    loss = float(np.einsum("ij,ij->", resid, resid) / y.shape[0])
    return loss, 2.0 * resid / y.shape[0]


def l1_loss(y, pred):
    """Mean Euclidean residual norm, with (sub)gradient w.r.t. pred."""
    y, pred = _as_2d(y), _as_2d(pred)
    if y.shape != pred.shape:
        raise ShapeError(f"responses {y.shape} do not match predictions {pred.shape}")
    resid = pred - y
    norms = np.linalg.norm(resid, axis=1)
    grad = np.zeros_like(resid)
    np.divide(resid, norms[:, None], out=grad, where=norms[:, None] > 0)
    return float(norms.mean()), grad / y.shape[0]


def pinball_loss(y, pred, alpha):
    """Mean pinball loss rho_alpha(y - pred), rho_alpha(x) = x(alpha - 1{x<0})."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("pinball level alpha must lie in (0, 1)")
    y, pred = _as_2d(y), _as_2d(pred)
    if y.shape != pred.shape:
        raise ShapeError(f"responses {y.shape} do not match predictions {pred.shape}")
    u = y - pred
    return float(np.mean(u * (alpha - (u < 0))))


def pinball_loss_grad(y, pred, alpha):
    """Mean pinball loss with subgradient w.r.t. pred (0-residual slope alpha)."""
    loss = pinball_loss(y, pred, alpha)
    y, pred = _as_2d(y), _as_2d(pred)
    u = y - pred
    grad = -(alpha - (u < 0)) / u.size
    return loss, grad


def point_loss_grad(y, pred, spec):
    """Dispatch a pointwise LossSpec to (loss, gradient w.r.t. pred)."""
    if spec.kind == "l2":
        return l2_loss(y, pred)
    if spec.kind == "l1":
        return l1_loss(y, pred)
    if spec.kind == "pinball":
        return pinball_loss_grad(y, pred, spec.alpha)
    raise DomainError(f"{spec.kind!r} is not a pointwise loss")


# --- evaluation distances ----------------------------------------------------


def _pair_mean_abs_sorted(sorted_x):
    """Mean |x_i - x_j| over ordered pairs i != j of a sorted 1-d array."""
    m = sorted_x.shape[0]
    idx = np.arange(m, dtype=np.float64)
    total = np.sum((2.0 * idx - m + 1.0) * sorted_x)
    return 2.0 * total / (m * (m - 1))


def _cross_mean_abs(a, b):
    """Mean |a_i - b_j| over all pairs, via sorting and prefix sums."""
    a = np.sort(a)
    pref = np.concatenate([[0.0], np.cumsum(a)])
    pos = np.searchsorted(a, b, side="right")
    total_a = pref[-1]
    # sum_i |a_i - t| = t*pos - pref[pos] + (total - pref[pos]) - t*(len-pos)
    sums = b * pos - pref[pos] + (total_a - pref[pos]) - b * (a.size - pos)
    return float(np.sum(sums) / (a.size * b.size))


def _pair_mean_norm(x):
    """Mean ||x_i - x_j|| over ordered pairs i != j, rows of (m, k) x."""
    m = x.shape[0]
    if x.shape[1] == 1:
        return _pair_mean_abs_sorted(np.sort(x[:, 0]))
    d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    return float(d.sum() / (m * (m - 1)))


def _cross_mean_norm(a, b):
    if a.shape[1] == 1:
        return _cross_mean_abs(a[:, 0], b[:, 0])
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(d.mean())


def _as_sample_set(samples, min_size=2):
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2:
        raise ShapeError(f"expected (m, k) sample set, got shape {samples.shape}")
    if samples.shape[0] < min_size:
        raise DomainError(f"need at least {min_size} samples, got {samples.shape[0]}")
    return samples


def energy_score_mc(samples, z):
    """Monte-Carlo energy score of a sample set against one observation.

    0.5 * mean_{j != j'} ||Z_j - Z_j'|| - mean_j ||Z_j - z||, the unbiased
    pairwise estimator.  Higher is better; a point mass at z scores 0.
    """
    samples = _as_sample_set(samples)
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if z.shape[0] != samples.shape[1]:
        raise ShapeError(f"observation dim {z.shape[0]} != sample dim {samples.shape[1]}")
    spread = 0.5 * _pair_mean_norm(samples)
    misfit = float(np.linalg.norm(samples - z[None, :], axis=1).mean())
    return spread - misfit


def energy_distance_mc(samples_p, samples_q):
    """Monte-Carlo energy distance between two sample sets.

    2 E||Z - Z'|| - E||Z - Z~|| - E||Z' - Z~'|| with the cross term over
    all pairs and unbiased within-set pair means.
    """
    p = _as_sample_set(samples_p)
    q = _as_sample_set(samples_q)
    if p.shape[1] != q.shape[1]:
        raise ShapeError("sample sets live in different dimensions")
    return 2.0 * _cross_mean_norm(p, q) - _pair_mean_norm(p) - _pair_mean_norm(q)


def cramer_distance_exact(sorted_a, sorted_b):
    """Exact integral of (F_a - F_b)^2 between two empirical CDFs.

    Inputs are univariate samples (sorted or not; they are sorted here).
    The integrand is piecewise constant between pooled order statistics,
    so the integral is computed exactly by merging breakpoints.
    """
    a = np.sort(np.asarray(sorted_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(sorted_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("empty sample in Cramer distance")
    pool = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(a, pool[:-1], side="right") / a.size
    fb = np.searchsorted(b, pool[:-1], side="right") / b.size
    return float(np.sum((fa - fb) ** 2 * np.diff(pool)))


def crps(samples, z):
    """CRPS of the empirical CDF of ``samples`` against observation ``z``.

    Exact integral of (F_hat(t) - 1{t >= z})^2 dt; nonnegative, lower is
    better, and equals the negative energy score up to the O(1/m)
    diagonal correction of the unbiased spread estimate.
    """
    s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if s.size == 0:
        raise DomainError("empty sample in CRPS")
    z = float(z)
    pool = np.sort(np.concatenate([s, [z]]))
    fhat = np.searchsorted(s, pool[:-1], side="right") / s.size
    step = (pool[:-1] >= z).astype(np.float64)
    return float(np.sum((fhat - step) ** 2 * np.diff(pool)))


def mmd_squared(samples_p, samples_q, spec):
    """Squared MMD between two sample sets under a kernel LossSpec.

    E k(Z, Z~) - 2 E k(Z, Z') + E k(Z', Z~') with unbiased within-set
    pair means; may be slightly negative for equal distributions.
    """
    if spec.kind not in ("gaussian", "laplace", "imq", "energy"):
        raise DomainError(f"{spec.kind!r} is not a kernel")
    p = _as_sample_set(samples_p)
    q = _as_sample_set(samples_q)
    if p.shape[1] != q.shape[1]:
        raise ShapeError("sample sets live in different dimensions")

    def within(x):
        m = x.shape[0]
        kmat = _kernel_value(spec, x[:, None, :] - x[None, :, :])
        return (kmat.sum() - np.trace(kmat)) / (m * (m - 1))

    cross = _kernel_value(spec, p[:, None, :] - q[None, :, :]).mean()
    return float(within(p) - 2.0 * cross + within(q))
