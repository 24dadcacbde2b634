"""User-facing distributional regression estimator.

``fit`` standardizes the data by training statistics, trains a noisy
generator network under the energy (or a kernel) loss, and returns a
model that predicts by Monte Carlo: independent forward passes at a
covariate value form an i.i.d. sample from the fitted conditional
distribution, from which means, quantiles and prediction intervals are
read off.  All predictions are de-standardized to original units.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import mlp, optim
from .core import Rng
from .errors import DomainError, FormatError, ShapeError

_CHUNK_ROWS = 65536


@dataclass
class Normalization:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    degenerate: bool = False

    def to_dict(self):
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
            "degenerate": self.degenerate,
        }

    @staticmethod
    def from_dict(d):
        try:
            return Normalization(
                x_mean=np.asarray(d["x_mean"], dtype=np.float64),
                x_std=np.asarray(d["x_std"], dtype=np.float64),
                y_mean=np.asarray(d["y_mean"], dtype=np.float64),
                y_std=np.asarray(d["y_std"], dtype=np.float64),
                degenerate=bool(d.get("degenerate", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed normalization block: {exc}") from exc


def compute_normalization(x, y):
    """Training-set mean/std per coordinate; zero-variance stds become 1."""
    x_mean, x_std = x.mean(axis=0), x.std(axis=0)
    y_mean, y_std = y.mean(axis=0), y.std(axis=0)
    degenerate = bool(np.any(x_std == 0) or np.any(y_std == 0))
    if degenerate:
        warnings.warn("zero-variance column; its std is treated as 1", stacklevel=3)
        x_std = np.where(x_std == 0, 1.0, x_std)
        y_std = np.where(y_std == 0, 1.0, y_std)
    return Normalization(x_mean, x_std, y_mean, y_std, degenerate)


@dataclass
class EngressionModel:
    params: mlp.NetParams
    net_config: mlp.NetConfig
    train_config: optim.TrainConfig
    norm: Normalization
    loss_trace: np.ndarray = field(default=None, repr=False)

    # -- prediction ------------------------------------------------------

    def _default_rng(self):
        return Rng(self.train_config.seed)

    def _forward_std(self, x_std, rng):
        out = np.empty((x_std.shape[0], self.net_config.out_dim))
        for start in range(0, x_std.shape[0], _CHUNK_ROWS):
            chunk = x_std[start : start + _CHUNK_ROWS]
            out[start : start + _CHUNK_ROWS], _ = mlp.forward(
                self.params, self.net_config, chunk, rng=rng
            )
        return out

    def _check_x(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None] if self.net_config.in_dim == 1 else x[None, :]
        if x.ndim != 2 or x.shape[1] != self.net_config.in_dim:
            raise ShapeError(
                f"covariates of shape {x.shape} do not match in_dim {self.net_config.in_dim}"
            )
        return x

    def sample(self, x, nsample, rng=None):
        """Draw ``nsample`` i.i.d. responses at a single covariate vector."""
        if nsample < 1:
            raise DomainError("nsample must be >= 1")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x[None]
        if x.ndim != 1 or x.shape[0] != self.net_config.in_dim:
            raise ShapeError(f"expected a {self.net_config.in_dim}-vector, got {x.shape}")
        draws = self.sample_matrix(x[None, :], nsample, rng=rng)
        return draws[0]

    def sample_matrix(self, x, nsample, rng=None):
        """Conditional draws for every row of ``x``; shape (n, nsample, k)."""
        if nsample < 1:
            raise DomainError("nsample must be >= 1")
        x = self._check_x(x)
        rng = rng if rng is not None else self._default_rng()
        x_std = (x - self.norm.x_mean) / self.norm.x_std
        rep = np.repeat(x_std, nsample, axis=0)
        out = self._forward_std(rep, rng)
        out = out.reshape(x.shape[0], nsample, self.net_config.out_dim)
        return self.norm.y_mean + self.norm.y_std * out

    def predict_mean(self, x, nsample=512, rng=None):
        """Monte-Carlo conditional mean, one row per covariate row."""
        return self.sample_matrix(x, nsample, rng=rng).mean(axis=1)

    def predict_quantile(self, x, alphas, nsample=512, rng=None):
        """Empirical conditional quantiles from one shared draw set per row.

        Univariate responses only.  Reusing the same draws across levels
        guarantees the predicted quantiles never cross in ``alphas``.
        """
        if self.net_config.out_dim != 1:
            raise DomainError("quantile prediction is defined for univariate responses only")
        alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
        if np.any(alphas < 0) or np.any(alphas > 1):
            raise DomainError("quantile levels must lie in [0, 1]")
        draws = self.sample_matrix(x, nsample, rng=rng)[:, :, 0]
        return np.quantile(draws, alphas, axis=1, method="linear").T

    def prediction_interval(self, x, level=0.95, nsample=512, rng=None):
        """Central prediction interval from the (1 -/+ level)/2 quantiles."""
        if not 0.0 <= level <= 1.0:
            raise DomainError("interval level must lie in [0, 1]")
        lo, hi = (1.0 - level) / 2.0, (1.0 + level) / 2.0
        return self.predict_quantile(x, [lo, hi], nsample=nsample, rng=rng)

    # -- persistence -----------------------------------------------------

    def to_json(self):
        payload = {"version": mlp.MODEL_FORMAT_VERSION, "kind": "engression"}
        payload.update(mlp.params_to_payload(self.params, self.net_config))
        payload["normalization"] = self.norm.to_dict()
        payload["train"] = {
            "steps": self.train_config.steps,
            "lr": self.train_config.lr,
            "batch_size": self.train_config.batch_size,
            "m_per_obs": self.train_config.m_per_obs,
            "loss": {
                "kind": self.train_config.loss.kind,
                "sigma": self.train_config.loss.sigma,
                "c": self.train_config.loss.c,
                "alpha": self.train_config.loss.alpha,
            },
            "seed": self.train_config.seed,
        }
        return json.dumps(payload).encode("utf-8")

    @staticmethod
    def from_json(blob):
        payload = mlp.load_payload(blob)
        if payload.get("kind") != "engression":
            raise FormatError(f"not an engression model: kind={payload.get('kind')!r}")
        params, config = mlp.payload_to_params(payload)
        norm = Normalization.from_dict(payload.get("normalization") or {})
        tr = payload.get("train", {})
        from .losses import LossSpec

        loss_raw = tr.get("loss", {})
        train_config = optim.TrainConfig(
            steps=int(tr.get("steps", 0)),
            lr=float(tr.get("lr", 1e-2)),
            batch_size=tr.get("batch_size"),
            m_per_obs=int(tr.get("m_per_obs", 2)),
            loss=LossSpec(
                kind=loss_raw.get("kind", "energy"),
                sigma=float(loss_raw.get("sigma", 1.0)),
                c=float(loss_raw.get("c", 1.0)),
                alpha=float(loss_raw.get("alpha", 0.5)),
            ),
            seed=int(tr.get("seed", 0)),
        )
        return EngressionModel(params=params, net_config=config,
                               train_config=train_config, norm=norm)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_json())

    @staticmethod
    def load(path):
        with open(path, "rb") as fh:
            return EngressionModel.from_json(fh.read())


def fit(x, y, train_config=None, net_config=None, rng=None):
    """Train an engression model on (x, y).

    Standardizes both sides by training statistics, trains the noisy
    generator under the configured distributional loss, and packages the
    result with its normalization for de-standardized prediction.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"covariate rows {x.shape[0]} != response rows {y.shape[0]}")
    if x.shape[0] < 2:
        raise DomainError("need at least two observations to standardize")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("training data contains non-finite values")

    train_config = train_config if train_config is not None else optim.TrainConfig()
    if not train_config.loss.distributional:
        raise DomainError("engression needs a distributional loss (energy or kernel)")
    net_config = net_config if net_config is not None else mlp.NetConfig(
        in_dim=x.shape[1], out_dim=y.shape[1]
    )
    if net_config.in_dim != x.shape[1] or net_config.out_dim != y.shape[1]:
        raise ShapeError("net_config dimensions do not match the data")
    if net_config.noise_dim < 1:
        raise DomainError("engression needs noise_dim >= 1")

    norm = compute_normalization(x, y)
    x_std = (x - norm.x_mean) / norm.x_std
    y_std = (y - norm.y_mean) / norm.y_std

    rng = rng if rng is not None else Rng(train_config.seed)
    init_rng, train_rng = rng.split(2)
    params = mlp.init_params(net_config, init_rng)
    params, trace = optim.train(params, net_config, x_std, y_std, train_config, train_rng)
    return EngressionModel(params=params, net_config=net_config,
                           train_config=train_config, norm=norm, loss_trace=trace)
