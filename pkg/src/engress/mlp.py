"""Noise-concatenating multilayer perceptron with exact backprop.

The generator g(x, eps) is an MLP in which every hidden layer receives a
fresh block of Unif[0,1] noise concatenated to its input, plus an
additive identity skip connection whenever the layer's input and output
widths match, and a direct linear term from the covariates to the
output.  Setting ``noise_dim=0`` turns the same code into a plain
deterministic MLP, which is what the regression baselines train.

Forward passes cache every intermediate needed to compute exact
reverse-mode gradients by hand; `backward` differentiates <dy, y> with
respect to every parameter.  The ReLU subgradient at exactly 0 is taken
to be 0, and replaying a forward pass with the cached noise reproduces
the cached output bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, ShapeError

MODEL_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class NetConfig:
    in_dim: int
    out_dim: int
    hidden_dim: int = 100
    num_layers: int = 3
    noise_dim: int = 100
    activation: str = "relu"
    skip: bool = True

    def __post_init__(self):
        if min(self.in_dim, self.out_dim, self.hidden_dim) < 1:
            raise DomainError("dimensions must be >= 1")
        if self.num_layers < 1:
            raise DomainError("need at least one hidden layer")
        if self.noise_dim < 0:
            raise DomainError("noise_dim must be >= 0")
        if self.activation != "relu":
            raise DomainError(f"unsupported activation {self.activation!r}")

    def layer_in_dims(self):
        """Width of the dense input of each hidden layer (incl. noise block)."""
        dims = []
        prev = self.in_dim
        for _ in range(self.num_layers):
            dims.append(prev + self.noise_dim)
            prev = self.hidden_dim
        return dims


@dataclass
class NetParams:
    """Weights of the generator; shapes follow :class:`NetConfig`."""

    weights: list = field(default_factory=list)   # (hidden, prev + noise) each
    biases: list = field(default_factory=list)    # (hidden,) each
    out_weight: np.ndarray = None                 # (out, hidden)
    out_bias: np.ndarray = None                   # (out,)
    lin_weight: np.ndarray = None                 # (out, in), direct linear term

    def arrays(self):
        """All parameter arrays in a fixed flat order."""
        return (
            list(self.weights)
            + list(self.biases)
            + [self.out_weight, self.out_bias, self.lin_weight]
        )

    def copy(self):
        return NetParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            out_weight=self.out_weight.copy(),
            out_bias=self.out_bias.copy(),
            lin_weight=self.lin_weight.copy(),
        )


@dataclass
class ForwardCache:
    x: np.ndarray          # (n, d)
    layer_inputs: list     # concat [a_prev, eps] per layer, (n, prev + noise)
    relu_masks: list       # boolean (n, hidden) per layer
    skipped: list          # whether the identity skip applied, per layer
    last_hidden: np.ndarray
    noises: list           # the exact noise blocks drawn, (n, noise_dim) per layer
    _acts: list = None     # post-activation buffers, recycled across calls
    _scratch: dict = field(default_factory=dict)


def zeros_like_params(params):
    return NetParams(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
        out_weight=np.zeros_like(params.out_weight),
        out_bias=np.zeros_like(params.out_bias),
        lin_weight=np.zeros_like(params.lin_weight),
    )


def init_params(config, rng):
    """Uniform(+-sqrt(6/fan_in)) weights, zero biases, zero linear term."""
    weights, biases = [], []
    for fan_in in config.layer_in_dims():
        bound = np.sqrt(6.0 / fan_in)
        weights.append(bound * (2.0 * rng.uniform((config.hidden_dim, fan_in)) - 1.0))
        biases.append(np.zeros(config.hidden_dim))
    bound = np.sqrt(6.0 / config.hidden_dim)
    out_weight = bound * (2.0 * rng.uniform((config.out_dim, config.hidden_dim)) - 1.0)
    return NetParams(
        weights=weights,
        biases=biases,
        out_weight=out_weight,
        out_bias=np.zeros(config.out_dim),
        lin_weight=np.zeros((config.out_dim, config.in_dim)),
    )


def _check_params(params, config):
    dims = config.layer_in_dims()
    if len(params.weights) != config.num_layers:
        raise ShapeError("parameter layer count does not match config")
    for w, b, fan_in in zip(params.weights, params.biases, dims):
        if w.shape != (config.hidden_dim, fan_in) or b.shape != (config.hidden_dim,):
            raise ShapeError(f"layer weight shape {w.shape} inconsistent with config")
    if params.out_weight.shape != (config.out_dim, config.hidden_dim):
        raise ShapeError("output weight shape inconsistent with config")
    if params.lin_weight.shape != (config.out_dim, config.in_dim):
        raise ShapeError("linear-term shape inconsistent with config")


def forward(params, config, x, rng=None, noise=None, cache=None):
    """Run the generator on a batch (n, d) or a single vector (d,).

    Fresh Unif[0,1] noise blocks are drawn from ``rng`` for every hidden
    layer unless ``noise`` (a list of per-layer blocks) is supplied, in
    which case the pass is a deterministic replay.  Returns (y, cache).

    Passing the cache of a previous same-shaped call recycles its
    buffers; training loops use this to avoid reallocating the large
    per-layer intermediates every step.
    """
    _check_params(params, config)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != config.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match in_dim {config.in_dim}")
    n = x.shape[0]

    if cache is not None and cache.x.shape != x.shape:
        cache = None
    if cache is None:
        dims = config.layer_in_dims()
        cache = ForwardCache(
            x=x,
            layer_inputs=[np.empty((n, d)) for d in dims],
            relu_masks=[np.empty((n, config.hidden_dim), dtype=bool)
                        for _ in range(config.num_layers)],
            skipped=[False] * config.num_layers,
            last_hidden=None,
            noises=[np.empty((n, config.noise_dim)) for _ in range(config.num_layers)],
            _acts=[np.empty((n, config.hidden_dim)) for _ in range(config.num_layers)],
        )
    cache.x = x

    if noise is None:
        if config.noise_dim > 0 and rng is None:
            raise DomainError("a noisy net needs an rng (or explicit noise blocks)")
        if config.noise_dim > 0:
            for e in cache.noises:
                rng.fill_uniform(e)
    else:
        noise = [np.asarray(e, dtype=np.float64) for e in noise]
        if len(noise) != config.num_layers:
            raise ShapeError("need one noise block per hidden layer")
        for e in noise:
            if e.shape != (n, config.noise_dim):
                raise ShapeError(f"noise block shape {e.shape} inconsistent")
        cache.noises = noise

    a = x
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        if config.noise_dim > 0:
            c = cache.layer_inputs[layer]
            c[:, : a.shape[1]] = a
            c[:, a.shape[1] :] = cache.noises[layer]
        else:
            c = a
            cache.layer_inputs[layer] = c
        z = cache._acts[layer]
        np.matmul(c, w.T, out=z)
        z += b
        mask = cache.relu_masks[layer]
        np.greater(z, 0.0, out=mask)
        cache.skipped[layer] = config.skip and a.shape[1] == config.hidden_dim
        np.maximum(z, 0.0, out=z)
        if cache.skipped[layer]:
            z += a
        a = z

    cache.last_hidden = a
    y = a @ params.out_weight.T + params.out_bias + x @ params.lin_weight.T
    return (y[0] if single else y), cache


def backward(params, config, cache, dy):
    """Gradients of sum_i <dy_i, y_i> w.r.t. every parameter.

    ``cache`` must come from a forward pass with the same parameters;
    stale caches are rejected on shape grounds.
    """
    dy = np.asarray(dy, dtype=np.float64)
    if dy.ndim == 1:
        dy = dy[None, :]
    n = cache.x.shape[0]
    if dy.shape != (n, config.out_dim):
        raise ShapeError(f"dy shape {dy.shape} does not match ({n}, {config.out_dim})")
    if len(cache.layer_inputs) != config.num_layers:
        raise ShapeError("cache does not match the network depth")

    grads = zeros_like_params(params)
    grads.out_weight = dy.T @ cache.last_hidden
    grads.out_bias = dy.sum(axis=0)
    grads.lin_weight = dy.T @ cache.x
    da = dy @ params.out_weight

    scratch = cache._scratch
    if scratch.get("dz") is None or scratch["dz"].shape[0] != n:
        scratch["dz"] = np.empty((n, config.hidden_dim))
        scratch["ping"] = np.empty((n, config.hidden_dim))
        scratch["pong"] = np.empty((n, config.hidden_dim))
    for layer in reversed(range(config.num_layers)):
        c = cache.layer_inputs[layer]
        if c.shape[0] != n:
            raise ShapeError("cache batch size does not match dy")
        dz = np.multiply(da, cache.relu_masks[layer], out=scratch["dz"])
        np.matmul(dz.T, c, out=grads.weights[layer])
        grads.biases[layer] = dz.sum(axis=0)
        if layer == 0:
            break  # the gradient w.r.t. the covariates is not needed
        # propagate through the non-noise input block
        w_in = np.ascontiguousarray(params.weights[layer][:, : config.hidden_dim])
        target = scratch["ping"] if da is not scratch["ping"] else scratch["pong"]
        da_prev = np.matmul(dz, w_in, out=target)
        if cache.skipped[layer]:
            da_prev += da
        da = da_prev
    return grads


# --- serialization -----------------------------------------------------------


def params_to_payload(params, config):
    return {
        "config": {
            "in_dim": config.in_dim,
            "out_dim": config.out_dim,
            "hidden_dim": config.hidden_dim,
            "num_layers": config.num_layers,
            "noise_dim": config.noise_dim,
            "activation": config.activation,
            "skip": config.skip,
        },
        "params": {
            "layer_weights": [w.tolist() for w in params.weights],
            "layer_biases": [b.tolist() for b in params.biases],
            "out_weight": params.out_weight.tolist(),
            "out_bias": params.out_bias.tolist(),
            "lin_weight": params.lin_weight.tolist(),
        },
    }


def payload_to_params(payload):
    try:
        cfg = payload["config"]
        config = NetConfig(
            in_dim=int(cfg["in_dim"]),
            out_dim=int(cfg["out_dim"]),
            hidden_dim=int(cfg["hidden_dim"]),
            num_layers=int(cfg["num_layers"]),
            noise_dim=int(cfg["noise_dim"]),
            activation=cfg["activation"],
            skip=bool(cfg["skip"]),
        )
        raw = payload["params"]
        params = NetParams(
            weights=[np.asarray(w, dtype=np.float64) for w in raw["layer_weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in raw["layer_biases"]],
            out_weight=np.asarray(raw["out_weight"], dtype=np.float64),
            out_bias=np.asarray(raw["out_bias"], dtype=np.float64),
            lin_weight=np.asarray(raw["lin_weight"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model payload: {exc}") from exc
    _check_params(params, config)
    return params, config


def serialize(params, config, normalization=None):
    """Versioned JSON model bytes; floats round-trip bit-exactly."""
    payload = {"version": MODEL_FORMAT_VERSION}
    payload.update(params_to_payload(params, config))
    payload["normalization"] = normalization
    return json.dumps(payload).encode("utf-8")


def deserialize(blob):
    """Inverse of :func:`serialize`; returns (params, config)."""
    payload = load_payload(blob)
    params, config = payload_to_params(payload)
    return params, config


def load_payload(blob):
    """Parse and version-check a model JSON payload."""
    try:
        payload = json.loads(blob.decode("utf-8") if isinstance(blob, bytes) else blob)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model payload is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError("model payload must be a JSON object")
    version = payload.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(
            f"unsupported model format version {version!r}; "
            f"this build reads version {MODEL_FORMAT_VERSION!r}"
        )
    return payload
