"""Quadratic pre-ANM estimator for the two-point design.

Fits the three-parameter model Y = b0 + b1 (x + eta) + b2 (x + eta)^2
together with a nonparametric noise law by minimizing, over both design
points, the exact Cramer distance between the model's conditional
distribution and the empirical conditional distribution of the data.
The noise is represented by a monotone quantile table on a 101-point
level grid (equal-mass atoms), re-projected onto the monotone cone and
re-centered to median 0 after every Adam step.

For equal-mass atom sets the Cramer distance admits the energy-distance
identity

    CD(F, G) = E|Z - Y| - 0.5 E|Z - Z'| - 0.5 E|Y - Y'|

whose value and subgradient with respect to the atom locations are
computed exactly with sorted prefix sums, so no sampling noise enters
the optimization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import DomainError


def _sorted_prefix(y):
    ys = np.sort(np.asarray(y, dtype=np.float64).ravel())
    return ys, np.concatenate([[0.0], np.cumsum(ys)])


def _abs_sums_against(ys, pref, z):
    """For sorted ys with prefix sums: sum_i |z_k - y_i| and the sign sums
    sum_i sign(z_k - y_i), exactly (ties count zero)."""
    n = ys.size
    left = np.searchsorted(ys, z, side="left")
    right = np.searchsorted(ys, z, side="right")
    total = pref[-1]
    abs_sums = z * left - pref[left] + (total - pref[right]) - z * (n - right)
    sign_sums = left - (n - right)
    return abs_sums, sign_sums


def _self_pair_mean_abs(ys, pref):
    """Mean |y_i - y_j| over ALL ordered pairs (diagonal included) of sorted ys."""
    n = ys.size
    idx = np.arange(n, dtype=np.float64)
    return 2.0 * np.sum((2.0 * idx - n + 1.0) * ys) / (n * n)


def _cramer_value_and_atom_grad(atoms, ys, pref, y_pair_mean):
    """Exact CD between the equal-mass atom law and the ECDF of ys,
    plus d CD / d atom_k."""
    m = atoms.size
    n = ys.size
    abs_y, sign_y = _abs_sums_against(ys, pref, atoms)
    zs, zpref = _sorted_prefix(atoms)
    abs_z, sign_z = _abs_sums_against(zs, zpref, atoms)
    value = abs_y.sum() / (m * n) - abs_z.sum() / (2.0 * m * m) - 0.5 * y_pair_mean
    grad = sign_y / (m * n) - sign_z / (m * m)
    return value, grad


@dataclass
class QuadraticFit:
    beta: np.ndarray                 # (b0, b1, b2)
    noise_quantiles: np.ndarray      # monotone table, median entry 0
    alphas: np.ndarray
    trace: np.ndarray = field(default=None, repr=False)

    def conditional_atoms(self, x):
        """Equal-mass atoms of the fitted conditional law at covariate x."""
        z = x + self.noise_quantiles
        b0, b1, b2 = self.beta
        return b0 + b1 * z + b2 * z * z

    def conditional_quantile(self, x, alpha):
        """Fitted conditional quantile, interpolated on the level grid."""
        atoms = np.sort(self.conditional_atoms(x))
        return float(np.interp(alpha, self.alphas, atoms))

    def conditional_mean(self, x):
        return float(self.conditional_atoms(x).mean())


def fit_two_point_cramer(x1, x2, y1, y2, steps=5000, lr=0.02, grid_size=101):
    """Fit the quadratic pre-ANM to samples at two design points.

    ``y1`` and ``y2`` are the response samples observed at ``x1`` and
    ``x2``.  Minimizes CD(model | x1, data | x1) + CD(model | x2,
    data | x2) by Adam with isotonic projection of the noise table.
    Deterministic given the data (data-driven initialization).
    """
    if not x1 < x2:
        raise DomainError("need x1 < x2")
    if grid_size < 3 or grid_size % 2 == 0:
        raise DomainError("grid_size must be an odd number >= 3")
    y1 = np.asarray(y1, dtype=np.float64).ravel()
    y2 = np.asarray(y2, dtype=np.float64).ravel()
    if y1.size < 2 or y2.size < 2:
        raise DomainError("need at least two observations per design point")

    mid = grid_size // 2
    # cell-midpoint levels: equal-mass atoms at these quantiles are the
    # unbiased staircase approximation, and the central entry is exactly 0.5
    alphas = (np.arange(grid_size) + 0.5) / grid_size

    # moment-matched initialization: conditional medians give two equations;
    # for symmetric noise the conditional IQR is exactly (b1 + 2 b2 x) * IQR(eta),
    # so the IQR ratio pins b2/b1 up to noise
    med1, med2 = np.median(y1), np.median(y2)
    iqr1 = np.subtract(*np.quantile(y1, [0.75, 0.25]))
    iqr2 = np.subtract(*np.quantile(y2, [0.75, 0.25]))
    dmed = med2 - med1
    b1, b2 = (dmed / (x2 - x1) or 1.0), 0.0
    if iqr1 > 0 and iqr2 > 0:
        r = iqr2 / iqr1
        if abs(1.0 - r) > 1e-6:
            bracket = 2.0 * (r * x1 - x2) / (1.0 - r) * (x2 - x1) + (x2 * x2 - x1 * x1)
            if abs(bracket) > 1e-12:
                b2_cand = dmed / bracket
                b1_cand = 2.0 * b2_cand * (r * x1 - x2) / (1.0 - r)
                if np.isfinite(b1_cand) and np.isfinite(b2_cand):
                    b1, b2 = b1_cand, b2_cand
    b0 = med1 - b1 * x1 - b2 * x1 * x1
    # residual quantiles at x1, mapped through the local slope, as the
    # initial noise table
    resid_q = np.quantile(y1 - med1, alphas, method="linear")
    slope = b1 + 2.0 * b2 * x1
    q = resid_q / slope if slope != 0 else resid_q.copy()
    q = isotonic_regression(q).x
    q = q - q[mid]

    theta = np.concatenate([[b0, b1, b2], q])
    m_acc = np.zeros_like(theta)
    v_acc = np.zeros_like(theta)

    data = []
    for x, y in ((x1, y1), (x2, y2)):
        ys, pref = _sorted_prefix(y)
        data.append((x, ys, pref, _self_pair_mean_abs(ys, pref)))

    trace = np.empty(steps)
    for t in range(1, steps + 1):
        b0, b1, b2 = theta[:3]
        q = theta[3:]
        loss = 0.0
        grad = np.zeros_like(theta)
        for x, ys, pref, ypm in data:
            z = x + q
            atoms = b0 + b1 * z + b2 * z * z
            value, datoms = _cramer_value_and_atom_grad(atoms, ys, pref, ypm)
            loss += value
            grad[0] += datoms.sum()
            grad[1] += datoms @ z
            grad[2] += datoms @ (z * z)
            grad[3:] += datoms * (b1 + 2.0 * b2 * z)
        trace[t - 1] = loss

        m_acc = 0.9 * m_acc + 0.1 * grad
        v_acc = 0.999 * v_acc + 0.001 * grad * grad
        mhat = m_acc / (1.0 - 0.9**t)
        vhat = v_acc / (1.0 - 0.999**t)
        # constant lr while traveling, then decay to lr/100 to shrink the
        # Adam noise floor around the optimum
        warm = 0.6 * steps
        step_lr = lr if t <= warm else lr * 0.01 ** ((t - warm) / (steps - warm))
        theta -= step_lr * mhat / (np.sqrt(vhat) + 1e-8)

        proj = isotonic_regression(theta[3:]).x
        theta[3:] = proj - proj[mid]

    return QuadraticFit(beta=theta[:3].copy(), noise_quantiles=theta[3:].copy(),
                        alphas=alphas, trace=trace)
