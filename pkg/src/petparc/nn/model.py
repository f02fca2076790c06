"""The streamline transformer: token projection, encoder stack, per-token head.

Parameters live in a flat ``dict[str, Tensor]`` keyed by dotted names, which
is also the checkpoint tensor table.  No positional encoding is ever added,
so the encoder is equivariant to permutations of its tokens.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NonFiniteActivation, ShapeMismatch
from . import autograd as ag
from .autograd import Tensor

# bounds the (chunk, n, n) score block materialized during inference
_SCORE_BUDGET = 1 << 24


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 8
    token_dim: int = 128
    ff_hidden: int = 256
    num_heads: int = 1
    dropout: float = 0.1
    num_classes: int = 1600
    head_hidden: int = 256
    input_dim: int = 66
    norm: str = "pre"

    def __post_init__(self):
        for name in ("num_layers", "token_dim", "ff_hidden", "num_classes", "head_hidden", "input_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_heads != 1:
            raise ValueError("only single-head attention is supported")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.norm not in ("pre", "post"):
            raise ValueError("norm must be 'pre' or 'post'")

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d = cfg.token_dim
    shapes = {"embed.weight": (cfg.input_dim, d), "embed.bias": (d,)}
    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        for w in ("wq", "wk", "wv", "wo"):
            shapes[p + "attn." + w] = (d, d)
        for n in ("norm1", "norm2"):
            shapes[p + n + ".scale"] = (d,)
            shapes[p + n + ".offset"] = (d,)
        shapes[p + "ff.w1"] = (d, cfg.ff_hidden)
        shapes[p + "ff.b1"] = (cfg.ff_hidden,)
        shapes[p + "ff.w2"] = (cfg.ff_hidden, d)
        shapes[p + "ff.b2"] = (d,)
    shapes["head.w1"] = (d, cfg.head_hidden)
    shapes["head.b1"] = (cfg.head_hidden,)
    shapes["head.w2"] = (cfg.head_hidden, cfg.num_classes)
    shapes["head.b2"] = (cfg.num_classes,)
    return shapes


def init_params(cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64) -> dict[str, Tensor]:
    """Glorot-uniform matrices, zero biases, unit layer-norm scales."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".scale"):
            data = np.ones(shape)
        elif len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-limit, limit, size=shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def as_params(arrays: dict[str, np.ndarray], requires_grad=False) -> dict[str, Tensor]:
    return {k: Tensor(np.asarray(v), requires_grad=requires_grad) for k, v in arrays.items()}


def attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor) -> Tensor:
    """Single-head scaled dot-product self-attention over the token axis."""
    d = x.shape[-1]
    if wq.shape != (d, d):
        raise ShapeMismatch(f"attention weights {wq.shape} for token dim {d}")
    if not ag.grad_enabled() and x.ndim == 3:
        n = x.shape[1]
        chunk = max(1, _SCORE_BUDGET // (n * n))
        if chunk < x.shape[0]:
            parts = [
                _attention(Tensor(x.data[i : i + chunk]), wq, wk, wv, wo).data
                for i in range(0, x.shape[0], chunk)
            ]
            return Tensor(np.concatenate(parts))
    return _attention(x, wq, wk, wv, wo)


def attention_weights(x: Tensor, wq: Tensor, wk: Tensor) -> Tensor:
    scores = ag.mul(ag.matmul(x, wq) @ ag.swapaxes(ag.matmul(x, wk)), 1.0 / math.sqrt(x.shape[-1]))
    return ag.softmax(scores)


def _attention(x, wq, wk, wv, wo):
    return (attention_weights(x, wq, wk) @ (x @ wv)) @ wo


def _feed_forward(x: Tensor, params, p: str) -> Tensor:
    h = ag.relu(x @ params[p + "ff.w1"] + params[p + "ff.b1"])
    return h @ params[p + "ff.w2"] + params[p + "ff.b2"]


def _check_finite(t: Tensor, where: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteActivation(f"non-finite activation after {where}")


def encoder_forward(
    tokens,
    params: dict[str, Tensor],
    cfg: EncoderConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Project tokens (..., n, input_dim) and run the encoder stack.

    Each layer is attention then feed-forward, each sublayer with residual
    connection, layer normalization (pre- or post-, per ``cfg.norm``) and
    dropout in train mode.
    """
    x = ag.as_tensor(tokens, params["embed.weight"].data.dtype)
    if x.shape[-1] != cfg.input_dim:
        raise ShapeMismatch(f"tokens have {x.shape[-1]} features, model expects {cfg.input_dim}")
    if train and cfg.dropout > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    h = x @ params["embed.weight"] + params["embed.bias"]
    _check_finite(h, "token projection")
    pre = cfg.norm == "pre"
    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        attn_w = [params[p + "attn." + w] for w in ("wq", "wk", "wv", "wo")]
        n1 = (params[p + "norm1.scale"], params[p + "norm1.offset"])
        n2 = (params[p + "norm2.scale"], params[p + "norm2.offset"])
        if pre:
            h = h + ag.dropout(attention(ag.layer_norm(h, *n1), *attn_w), cfg.dropout, train, rng)
            h = h + ag.dropout(_feed_forward(ag.layer_norm(h, *n2), params, p), cfg.dropout, train, rng)
        else:
            h = ag.layer_norm(h + ag.dropout(attention(h, *attn_w), cfg.dropout, train, rng), *n1)
            h = ag.layer_norm(h + ag.dropout(_feed_forward(h, params, p), cfg.dropout, train, rng), *n2)
        _check_finite(h, f"encoder layer {i}")
    return h


def classify(features, params: dict[str, Tensor]) -> Tensor:
    """Per-token head: linear -> ReLU -> linear."""
    f = ag.as_tensor(features, params["head.w1"].data.dtype)
    if f.shape[-1] != params["head.w1"].shape[0]:
        raise ShapeMismatch(f"features have {f.shape[-1]} dims, head expects {params['head.w1'].shape[0]}")
    h = ag.relu(f @ params["head.w1"] + params["head.b1"])
    return h @ params["head.w2"] + params["head.b2"]


def forward(tokens, params, cfg: EncoderConfig, train=False, rng=None) -> Tensor:
    """Logits (..., n, num_classes) for a (batch of) token sequence(s)."""
    return classify(encoder_forward(tokens, params, cfg, train, rng), params)
