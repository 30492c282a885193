"""Learned deferred shader: positional encoding, a positional feature network
and a view-dependent color head, with a hand-derived backward pass.

The shader maps (position, normal, view direction) to RGB in (0, 1). The
positional network turns encoded positions into a feature vector; the color
head consumes (feature, normal, view direction) and squashes its output with
a logistic. Gradients are exact reverse-mode derivatives with respect to both
the weights and the inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class EncodingConfig:
    kind: str = "pe"  # "pe" | "gff" | "none"
    octaves: int = 4
    gff_features: int = 128
    gff_scale: float = 10.0
    passthrough: bool = True

    def __post_init__(self):
        if self.kind not in ("pe", "gff", "none"):
            raise ValueError(f"unknown encoding kind {self.kind!r}")
        if self.octaves < 0:
            raise ValueError("octave count must be >= 0")

    @property
    def dim(self) -> int:
        if self.kind == "pe":
            return (3 if self.passthrough else 0) + 6 * self.octaves
        if self.kind == "gff":
            return (3 if self.passthrough else 0) + 2 * self.gff_features
        return 3


def encode(x: np.ndarray, config: EncodingConfig, gff_B: np.ndarray | None = None):
    """Encode positions (p, 3) into (p, dim) features."""
    x = np.atleast_2d(x)
    if config.kind == "none":
        return x.copy()
    parts = [x] if config.passthrough else []
    if config.kind == "pe":
        for i in range(config.octaves):
            arg = (2.0**i) * np.pi * x
            parts.append(np.sin(arg))
            parts.append(np.cos(arg))
    else:  # gff
        if gff_B is None:
            raise ValueError("gaussian fourier encoding needs its frequency matrix")
        arg = 2.0 * np.pi * (x @ gff_B.T)
        parts.append(np.sin(arg))
        parts.append(np.cos(arg))
    return np.concatenate(parts, axis=1)


def encode_backward(x: np.ndarray, config: EncodingConfig, grad_feat: np.ndarray,
                    gff_B: np.ndarray | None = None) -> np.ndarray:
    """Chain dL/d(features) back to dL/dx."""
    x = np.atleast_2d(x)
    if config.kind == "none":
        return grad_feat.copy()
    off = 0
    grad_x = np.zeros_like(x)
    if config.passthrough:
        grad_x += grad_feat[:, :3]
        off = 3
    if config.kind == "pe":
        for i in range(config.octaves):
            c = (2.0**i) * np.pi
            arg = c * x
            g_sin = grad_feat[:, off : off + 3]
            g_cos = grad_feat[:, off + 3 : off + 6]
            grad_x += c * (np.cos(arg) * g_sin - np.sin(arg) * g_cos)
            off += 6
    else:
        m = config.gff_features
        arg = 2.0 * np.pi * (x @ gff_B.T)
        g_sin = grad_feat[:, off : off + m]
        g_cos = grad_feat[:, off + m : off + 2 * m]
        inner = 2.0 * np.pi * (np.cos(arg) * g_sin - np.sin(arg) * g_cos)
        grad_x += inner @ gff_B
    return grad_x


@dataclass
class ShaderParams:
    """Weights and architecture of the two-part shader MLP.

    weights maps layer names ("h0.W", "h0.b", "c0.W", ...) to arrays; the
    positional network layers are h0..h{k-1}, the color head c0..c{m-1}.
    """

    encoding: EncodingConfig
    weights: dict[str, np.ndarray]
    h_layer_sizes: list[int]
    c_layer_sizes: list[int]
    activation: str = "relu"
    siren_omega: float = 30.0
    gff_B: np.ndarray | None = None
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.h_layer_sizes[-1]

    @property
    def n_h_layers(self) -> int:
        return len(self.h_layer_sizes)

    def finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights.values())

    def copy(self) -> "ShaderParams":
        return ShaderParams(
            encoding=self.encoding,
            weights={k: w.copy() for k, w in self.weights.items()},
            h_layer_sizes=list(self.h_layer_sizes),
            c_layer_sizes=list(self.c_layer_sizes),
            activation=self.activation,
            siren_omega=self.siren_omega,
            gff_B=None if self.gff_B is None else self.gff_B.copy(),
            seed=self.seed,
        )


def init_params(seed: int = 0, encoding: EncodingConfig | None = None,
                h_layers: int = 3, h_width: int = 256, feature_dim: int = 256,
                c_hidden: int = 2, c_width: int = 256, activation: str = "relu",
                dtype=np.float64) -> ShaderParams:
    """Deterministic initialization. Hidden layers use fan-in-scaled uniform
    weights; the final color layer starts at zero so the shader outputs
    neutral gray before training."""
    if encoding is None:
        encoding = EncodingConfig()
    if activation not in ("relu", "siren"):
        raise ValueError(f"unknown activation {activation!r}")
    if h_layers < 1 or h_width < 1 or feature_dim < 1 or c_width < 1:
        raise ValueError("invalid architecture: zero-width or zero-depth network")
    rng = np.random.default_rng(seed)

    gff_B = None
    if encoding.kind == "gff":
        gff_B = (encoding.gff_scale * rng.standard_normal((encoding.gff_features, 3))).astype(dtype)

    h_sizes = [h_width] * (h_layers - 1) + [feature_dim]
    c_sizes = [c_width] * c_hidden + [3]
    weights: dict[str, np.ndarray] = {}

    def init_layer(name, fan_in, fan_out, first=False, zero=False):
        if zero:
            W = np.zeros((fan_out, fan_in))
        elif activation == "siren":
            if first:
                limit = 1.0 / fan_in
            else:
                limit = np.sqrt(6.0 / fan_in) / 30.0
            W = rng.uniform(-limit, limit, (fan_out, fan_in))
        else:
            limit = np.sqrt(6.0 / fan_in)
            W = rng.uniform(-limit, limit, (fan_out, fan_in))
        weights[name + ".W"] = W.astype(dtype)
        weights[name + ".b"] = np.zeros(fan_out, dtype=dtype)

    fan_in = encoding.dim
    for i, out in enumerate(h_sizes):
        init_layer(f"h{i}", fan_in, out, first=(i == 0))
        fan_in = out
    fan_in = feature_dim + 6
    for i, out in enumerate(c_sizes):
        init_layer(f"c{i}", fan_in, out, zero=(i == len(c_sizes) - 1))
        fan_in = out

    return ShaderParams(
        encoding=encoding,
        weights=weights,
        h_layer_sizes=h_sizes,
        c_layer_sizes=c_sizes,
        activation=activation,
        gff_B=gff_B,
        seed=seed,
    )


def _act(params: ShaderParams, z: np.ndarray) -> np.ndarray:
    if params.activation == "siren":
        return np.sin(params.siren_omega * z)
    return np.maximum(z, 0.0)


def _act_grad(params: ShaderParams, z: np.ndarray) -> np.ndarray:
    if params.activation == "siren":
        return params.siren_omega * np.cos(params.siren_omega * z)
    return (z > 0).astype(z.dtype)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ShadeContext:
    """Cached activations from a forward pass, consumed by shade_backward."""

    def __init__(self):
        self.x = None
        self.n = None
        self.w = None
        self.feat_input = None
        self.h_pre = []
        self.h_post = []
        self.c_input = None
        self.c_pre = []
        self.c_post = []
        self.rgb = None


def _forward(params: ShaderParams, x, n, w, ctx: ShadeContext | None = None):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = np.atleast_2d(np.asarray(n, dtype=np.float64))
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    bad = ~(np.isfinite(x).all(axis=1) & np.isfinite(n).all(axis=1) & np.isfinite(w).all(axis=1))
    if bad.any():
        raise ValueError(f"non-finite shader input at batch index {int(np.nonzero(bad)[0][0])}")

    feat = encode(x, params.encoding, params.gff_B)
    h = feat
    h_pre, h_post = [], []
    W = params.weights
    for i in range(params.n_h_layers):
        z = h @ W[f"h{i}.W"].T + W[f"h{i}.b"]
        h = _act(params, z)
        h_pre.append(z)
        h_post.append(h)
    features = h

    c_in = np.concatenate([features, n, w], axis=1)
    c = c_in
    c_pre, c_post = [], []
    n_c = len(params.c_layer_sizes)
    for i in range(n_c):
        z = c @ W[f"c{i}.W"].T + W[f"c{i}.b"]
        if i < n_c - 1:
            c = _act(params, z)
        else:
            c = _sigmoid(z)
        c_pre.append(z)
        c_post.append(c)
    rgb = c

    if ctx is not None:
        ctx.x, ctx.n, ctx.w = x, n, w
        ctx.feat_input = feat
        ctx.h_pre, ctx.h_post = h_pre, h_post
        ctx.c_input = c_in
        ctx.c_pre, ctx.c_post = c_pre, c_post
        ctx.rgb = rgb
    return rgb


def shade(params: ShaderParams, x, n, w) -> np.ndarray:
    """Evaluate the shader on a pixel batch: RGB in (0, 1), shape (p, 3)."""
    return _forward(params, x, n, w)


def shade_with_context(params: ShaderParams, x, n, w):
    ctx = ShadeContext()
    rgb = _forward(params, x, n, w, ctx)
    return rgb, ctx


def shade_backward(params: ShaderParams, ctx: ShadeContext, grad_rgb: np.ndarray):
    """Reverse-mode gradients of the shader.

    Returns (grad_weights dict, grad_x, grad_n, grad_w) for the batch that
    produced ctx; grad_x includes the encoding Jacobian.
    """
    W = params.weights
    grads: dict[str, np.ndarray] = {}

    # color head; final layer has the logistic
    n_c = len(params.c_layer_sizes)
    g = grad_rgb * ctx.c_post[-1] * (1.0 - ctx.c_post[-1])
    for i in range(n_c - 1, -1, -1):
        inp = ctx.c_input if i == 0 else ctx.c_post[i - 1]
        grads[f"c{i}.W"] = g.T @ inp
        grads[f"c{i}.b"] = g.sum(axis=0)
        g = g @ W[f"c{i}.W"]
        if i > 0:
            g = g * _act_grad(params, ctx.c_pre[i - 1])

    fd = params.feature_dim
    g_feat = g[:, :fd]
    grad_n = g[:, fd : fd + 3].copy()
    grad_w = g[:, fd + 3 :].copy()

    # positional network
    g = g_feat * _act_grad(params, ctx.h_pre[-1])
    for i in range(params.n_h_layers - 1, -1, -1):
        inp = ctx.feat_input if i == 0 else ctx.h_post[i - 1]
        grads[f"h{i}.W"] = g.T @ inp
        grads[f"h{i}.b"] = g.sum(axis=0)
        g = g @ W[f"h{i}.W"]
        if i > 0:
            g = g * _act_grad(params, ctx.h_pre[i - 1])

    grad_x = encode_backward(ctx.x, params.encoding, g, params.gff_B)
    return grads, grad_x, grad_n, grad_w


def extract_positional_features(params: ShaderParams, points: np.ndarray) -> np.ndarray:
    """Features of the positional network for raw 3D points, shape (p, feature_dim)."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    h = encode(x, params.encoding, params.gff_B)
    for i in range(params.n_h_layers):
        h = _act(params, h @ params.weights[f"h{i}.W"].T + params.weights[f"h{i}.b"])
    return h


def shade_from_features(params: ShaderParams, features, n, w) -> np.ndarray:
    """Run only the color head on externally supplied positional features."""
    c = np.concatenate([np.atleast_2d(features), np.atleast_2d(n), np.atleast_2d(w)], axis=1)
    n_c = len(params.c_layer_sizes)
    for i in range(n_c):
        z = c @ params.weights[f"c{i}.W"].T + params.weights[f"c{i}.b"]
        c = _act(params, z) if i < n_c - 1 else _sigmoid(z)
    return c


CHECKPOINT_VERSION = 1


def save_checkpoint(params: ShaderParams, path) -> None:
    """Self-describing npz container with a versioned JSON header."""
    meta = {
        "v": CHECKPOINT_VERSION,
        "encoding": asdict(params.encoding),
        "h_layer_sizes": params.h_layer_sizes,
        "c_layer_sizes": params.c_layer_sizes,
        "activation": params.activation,
        "siren_omega": params.siren_omega,
        "seed": params.seed,
        "has_gff": params.gff_B is not None,
    }
    arrays = dict(params.weights)
    if params.gff_B is not None:
        arrays["gff_B"] = params.gff_B
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> ShaderParams:
    data = np.load(path)
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("v") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('v')}")
    weights = {k: data[k] for k in data.files if k not in ("__meta__", "gff_B")}
    return ShaderParams(
        encoding=EncodingConfig(**meta["encoding"]),
        weights=weights,
        h_layer_sizes=list(meta["h_layer_sizes"]),
        c_layer_sizes=list(meta["c_layer_sizes"]),
        activation=meta["activation"],
        siren_omega=meta["siren_omega"],
        gff_B=data["gff_B"] if meta["has_gff"] else None,
        seed=meta["seed"],
    )
