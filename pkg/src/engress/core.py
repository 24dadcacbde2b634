"""Numeric substrate: float64 arrays, splittable RNG, order statistics.

All numerics in the package run in double precision on plain numpy
arrays.  Randomness goes through :class:`Rng`, a thin wrapper around a
counter-based bit generator (Philox) that supports deterministic
splitting into statistically independent substreams, so parallel
benchmark repetitions stay reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError


def as_matrix(a, name="array"):
    """Coerce to a float64 ndarray, rejecting non-finite entries."""
    out = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"{name} contains non-finite entries")
    return out


def matmul(a, b):
    """Matrix product in double precision.

    Raises
    ------
    ShapeError
        If the inner dimensions disagree.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.ndim}-d and {b.ndim}-d")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def empirical_quantile(values, alpha):
    """Linear-interpolation quantile at position (n-1)*alpha of the sorted values.

    ``alpha`` may be a scalar or an array of levels in [0, 1]; the result
    has the same shape as ``alpha``.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("quantile of an empty sample")
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha < 0.0) or np.any(alpha > 1.0):
        raise DomainError("quantile level outside [0, 1]")
    out = np.quantile(values, alpha, method="linear")
    return float(out) if out.ndim == 0 else out


class Rng:
    """Deterministic, splittable random stream.

    The same seed always yields the same stream; :meth:`split` derives
    substreams whose outputs are independent of each other and of the
    parent's continuation.  An ``Rng`` instance is single-owner: share
    work across threads or processes by splitting, never by passing the
    same instance around.
    """

    def __init__(self, seed=0, _gen=None):
        if _gen is not None:
            self._gen = _gen
        else:
            self._gen = np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))
        self.seed = int(seed) & (2**64 - 1)

    def split(self, n):
        """Derive ``n`` independent child streams, advancing this one."""
        if n < 0:
            raise DomainError("cannot split into a negative number of streams")
        return [Rng(self.seed, _gen=g) for g in self._gen.spawn(n)]

    def uniform(self, size=None):
        """Unif[0, 1) draws."""
        return self._gen.random(size)

    def fill_uniform(self, out):
        """Refill a C-contiguous float64 array with Unif[0, 1) draws."""
        self._gen.random(out=out)

    def normal(self, size=None, loc=0.0, scale=1.0):
        return self._gen.normal(loc=loc, scale=scale, size=size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high=high, size=size)

    def choice(self, n, size, replace=True):
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n):
        return self._gen.permutation(n)


def sample_uniform(rng, n):
    """Draw ``n`` values in [0, 1), advancing the stream."""
    if n < 0:
        raise DomainError("sample size must be nonnegative")
    return rng.uniform(size=int(n))
