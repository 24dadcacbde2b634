"""Adam and the gradient-descent training loop for generator networks.

Training follows the full-batch convention by default: at every step a
fresh set of noise draws is generated for each observation (``m_per_obs``
of them for distributional losses), the chosen loss and its exact
gradient are evaluated, gradients are backpropagated, and a
bias-corrected Adam update is applied.  A non-finite loss aborts with
:class:`~engress.errors.TrainingDiverged` carrying the step index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses, mlp
from .errors import DomainError, ShapeError, TrainingDiverged

FULL_BATCH = None


@dataclass
class TrainConfig:
    steps: int = 1000
    lr: float = 1e-2
    batch_size: int | None = FULL_BATCH
    m_per_obs: int = 2
    loss: losses.LossSpec = field(default_factory=losses.LossSpec)
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise DomainError("steps must be >= 0")
        if self.lr <= 0:
            raise DomainError("learning rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise DomainError("batch size must be >= 1 (or None for full batch)")
        if self.loss.distributional and self.m_per_obs < 2:
            raise DomainError("distributional losses need m_per_obs >= 2")


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameters."""

    m: mlp.NetParams
    v: mlp.NetParams
    t: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr):
    return AdamState(m=mlp.zeros_like_params(params), v=mlp.zeros_like_params(params), lr=lr)


def adam_step(params, grads, state):
    """Bias-corrected Adam update, applied in place; returns (params, state)."""
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def train(params, net_config, x, y, config, rng):
    """Fit ``params`` on (x, y) under ``config``; returns (params, loss trace).

    ``params`` is updated in place (the training run owns it).  For
    distributional losses each observation is paired with ``m_per_obs``
    fresh generator draws per step; pointwise losses use a single
    deterministic (or noisy, if configured) pass.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"incompatible data shapes {x.shape} and {y.shape}")
    if x.shape[0] < 1:
        raise DomainError("need at least one observation")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("training data contains non-finite values")

    n = x.shape[0]
    state = adam_init(params, config.lr)
    spec = config.loss
    trace = np.empty(config.steps)
    full_batch = config.batch_size is None or config.batch_size >= n
    x_rep = np.repeat(x, config.m_per_obs, axis=0) if full_batch and spec.distributional else None
    cache = None

    for step in range(config.steps):
        if full_batch:
            xb, yb = x, y
        else:
            idx = rng.choice(n, size=config.batch_size, replace=False)
            xb, yb = x[idx], y[idx]
        nb = xb.shape[0]

        if spec.distributional:
            m = config.m_per_obs
            xr = x_rep if x_rep is not None else np.repeat(xb, m, axis=0)
            out, cache = mlp.forward(params, net_config, xr, rng=rng, cache=cache)
            samples = out.reshape(nb, m, net_config.out_dim)
            loss = losses.kernel_loss_batch(yb, samples, spec)
            dsamples = losses.kernel_loss_grad(yb, samples, spec)
            dy = dsamples.reshape(nb * m, net_config.out_dim)
        else:
            out, cache = mlp.forward(params, net_config, xb, rng=rng, cache=cache)
            loss, dy = losses.point_loss_grad(yb, out, spec)

        if not np.isfinite(loss):
            raise TrainingDiverged(step)
        trace[step] = loss
        grads = mlp.backward(params, net_config, cache, dy)
        adam_step(params, grads, state)

    return params, trace
