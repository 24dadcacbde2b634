"""Comparison methods: NN L1/L2 regression, linear OLS, linear quantile regression.

The NN baselines reuse the generator architecture with ``noise_dim=0``
(a plain deterministic MLP) so that engression-vs-regression comparisons
hold the architecture fixed.  Linear least squares is solved in closed
form; linear quantile regression minimizes the pinball loss by
subgradient descent with the shared Adam optimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, mlp, optim
from .core import Rng
from .engression import Normalization, compute_normalization
from .errors import DomainError, FormatError, ShapeError, TrainingDiverged

NN_KINDS = {"l1": "nn_l1", "l2": "nn_l2"}


@dataclass
class BaselineModel:
    kind: str                       # nn_l1 | nn_l2 | linear_ols | linear_qr
    params: mlp.NetParams = None
    net_config: mlp.NetConfig = None
    norm: Normalization = None
    coef: np.ndarray = None         # linear_ols: (d+1, k) incl. intercept row
    alphas: np.ndarray = None       # linear_qr levels
    qr_coef: np.ndarray = None      # linear_qr: (len(alphas), d+1), original units
    jittered: bool = False
    loss_trace: np.ndarray = field(default=None, repr=False)

    def predict(self, x):
        """De-standardized predictions; (n, k), or (n, len(alphas)) for linear_qr."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind in ("nn_l1", "nn_l2"):
            if x.shape[1] != self.net_config.in_dim:
                raise ShapeError(f"covariate dim {x.shape[1]} != {self.net_config.in_dim}")
            x_std = (x - self.norm.x_mean) / self.norm.x_std
            out, _ = mlp.forward(self.params, self.net_config, x_std)
            return self.norm.y_mean + self.norm.y_std * out
        if self.kind == "linear_ols":
            if x.shape[1] != self.coef.shape[0] - 1:
                raise ShapeError(f"covariate dim {x.shape[1]} != {self.coef.shape[0] - 1}")
            return np.column_stack([np.ones(x.shape[0]), x]) @ self.coef
        if self.kind == "linear_qr":
            if x.shape[1] != self.qr_coef.shape[1] - 1:
                raise ShapeError(f"covariate dim {x.shape[1]} != {self.qr_coef.shape[1] - 1}")
            return np.column_stack([np.ones(x.shape[0]), x]) @ self.qr_coef.T
        raise DomainError(f"unknown baseline kind {self.kind!r}")

    # -- persistence -----------------------------------------------------

    def to_json(self):
        payload = {"version": mlp.MODEL_FORMAT_VERSION, "kind": self.kind}
        if self.kind in ("nn_l1", "nn_l2"):
            payload.update(mlp.params_to_payload(self.params, self.net_config))
            payload["normalization"] = self.norm.to_dict()
        elif self.kind == "linear_ols":
            payload["coef"] = self.coef.tolist()
            payload["jittered"] = self.jittered
        elif self.kind == "linear_qr":
            payload["alphas"] = self.alphas.tolist()
            payload["qr_coef"] = self.qr_coef.tolist()
        return json.dumps(payload).encode("utf-8")

    @staticmethod
    def from_json(blob):
        payload = mlp.load_payload(blob)
        kind = payload.get("kind")
        try:
            if kind in ("nn_l1", "nn_l2"):
                params, config = mlp.payload_to_params(payload)
                norm = Normalization.from_dict(payload["normalization"])
                return BaselineModel(kind=kind, params=params, net_config=config, norm=norm)
            if kind == "linear_ols":
                return BaselineModel(
                    kind=kind,
                    coef=np.asarray(payload["coef"], dtype=np.float64),
                    jittered=bool(payload.get("jittered", False)),
                )
            if kind == "linear_qr":
                return BaselineModel(
                    kind=kind,
                    alphas=np.asarray(payload["alphas"], dtype=np.float64),
                    qr_coef=np.asarray(payload["qr_coef"], dtype=np.float64),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed baseline payload: {exc}") from exc
        raise FormatError(f"unknown baseline kind {kind!r}")


def _prep(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"covariate rows {x.shape[0]} != response rows {y.shape[0]}")
    return x, y


def fit_nn_regression(x, y, loss="l2", net_config=None, train_config=None, rng=None):
    """Deterministic-net regression under the L1 or L2 loss."""
    if loss not in NN_KINDS:
        raise DomainError(f"nn regression loss must be 'l1' or 'l2', got {loss!r}")
    x, y = _prep(x, y)
    if net_config is None:
        net_config = mlp.NetConfig(in_dim=x.shape[1], out_dim=y.shape[1], noise_dim=0)
    elif net_config.noise_dim != 0:
        net_config = replace(net_config, noise_dim=0)
    if train_config is None:
        train_config = optim.TrainConfig(loss=losses.LossSpec(kind=loss))
    elif train_config.loss.kind != loss:
        train_config = replace(train_config, loss=losses.LossSpec(kind=loss))

    norm = compute_normalization(x, y)
    x_std = (x - norm.x_mean) / norm.x_std
    y_std = (y - norm.y_mean) / norm.y_std
    rng = rng if rng is not None else Rng(train_config.seed)
    init_rng, train_rng = rng.split(2)
    params = mlp.init_params(net_config, init_rng)
    params, trace = optim.train(params, net_config, x_std, y_std, train_config, train_rng)
    return BaselineModel(kind=NN_KINDS[loss], params=params, net_config=net_config,
                         norm=norm, loss_trace=trace)


def fit_linear_ols(x, y):
    """Exact least squares with intercept; rank deficiency gets a flagged
    1e-8 ridge jitter instead of an error."""
    x, y = _prep(x, y)
    a = np.column_stack([np.ones(x.shape[0]), x])
    jittered = bool(np.linalg.matrix_rank(a) < a.shape[1])
    if jittered:
        gram = a.T @ a + 1e-8 * np.eye(a.shape[1])
        coef = np.linalg.solve(gram, a.T @ y)
    else:
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    return BaselineModel(kind="linear_ols", coef=coef, jittered=jittered)


def fit_linear_model(features, y, spec, w_init=None, steps=2000, lr=0.05, rng=None):
    """Adam fit of a linear model on an explicit feature matrix.

    Drives any pointwise LossSpec; used for quantile regression and for
    demonstrating the non-uniqueness of degenerate designs (random
    ``w_init`` across restarts).  Returns (weights (p, k), loss trace).
    """
    features = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    n, p = features.shape
    if w_init is None:
        w = np.zeros((p, y.shape[1]))
    else:
        w = np.asarray(w_init, dtype=np.float64).reshape(p, y.shape[1]).copy()

    m = np.zeros_like(w)
    v = np.zeros_like(w)
    trace = np.empty(steps)
    warm = 0.6 * steps
    for t in range(1, steps + 1):
        pred = features @ w
        loss, dpred = losses.point_loss_grad(y, pred, spec)
        if not np.isfinite(loss):
            raise TrainingDiverged(t - 1)
        trace[t - 1] = loss
        g = features.T @ dpred
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * (g * g)
        mhat = m / (1.0 - 0.9**t)
        vhat = v / (1.0 - 0.999**t)
        # settle onto the (possibly kinked) optimum with a decayed rate
        step_lr = lr if t <= warm else lr * 0.01 ** ((t - warm) / (steps - warm))
        w -= step_lr * mhat / (np.sqrt(vhat) + 1e-8)
    return w, trace


def fit_linear_quantile(x, y, alphas, train_config=None):
    """Per-level linear pinball fits; coefficients kept in original units."""
    x, y = _prep(x, y)
    if y.shape[1] != 1:
        raise DomainError("linear quantile regression is univariate in the response")
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    if np.any(alphas <= 0) or np.any(alphas >= 1):
        raise DomainError("quantile levels must lie in (0, 1)")

    steps = train_config.steps if train_config is not None else 2000
    lr = train_config.lr if train_config is not None else 0.05

    norm = compute_normalization(x, y)
    x_std = (x - norm.x_mean) / norm.x_std
    y_std = (y - norm.y_mean) / norm.y_std
    feats = np.column_stack([np.ones(x.shape[0]), x_std])

    coefs = np.empty((alphas.size, x.shape[1] + 1))
    for i, alpha in enumerate(alphas):
        spec = losses.LossSpec(kind="pinball", alpha=float(alpha))
        w, _ = fit_linear_model(feats, y_std, spec, steps=steps, lr=lr)
        # back to original units: y = ym + ys*(b0 + w.(x-xm)/xs)
        slope = norm.y_std[0] * w[1:, 0] / norm.x_std
        intercept = norm.y_mean[0] + norm.y_std[0] * w[0, 0] - slope @ norm.x_mean
        coefs[i, 0] = intercept
        coefs[i, 1:] = slope
    return BaselineModel(kind="linear_qr", alphas=alphas, qr_coef=coefs)


def load_any_model(blob):
    """Load either an engression model or a baseline from model JSON."""
    payload = mlp.load_payload(blob)
    if payload.get("kind") == "engression":
        from .engression import EngressionModel

        return EngressionModel.from_json(blob)
    return BaselineModel.from_json(blob)
