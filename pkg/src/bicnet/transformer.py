"""Pre-norm transformer block, attention pooling and learned positions.

Shapes are written for a single sequence (``n x d``) but every function
accepts arbitrary leading batch axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError, DimensionError
from .numerics import Initializer, Module, Tensor, gelu, layer_norm, linear, matmul, softmax


@dataclass(frozen=True)
class BlockConfig:
    model_dim: int
    heads: int = 4
    mlp_hidden: int | None = None  # None -> 4 * model_dim
    layers: int = 1

    def __post_init__(self):
        if self.model_dim <= 0 or self.heads <= 0:
            raise ConfigurationError(f"model_dim and heads must be positive, got {self.model_dim}, {self.heads}")
        if self.model_dim % self.heads:
            raise ConfigurationError(f"heads={self.heads} does not divide model_dim={self.model_dim}")
        if self.layers < 1:
            raise ConfigurationError(f"layers must be >= 1, got {self.layers}")
        if self.mlp_hidden is not None and self.mlp_hidden <= 0:
            raise ConfigurationError(f"mlp_hidden must be positive, got {self.mlp_hidden}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    @property
    def hidden(self) -> int:
        return self.mlp_hidden or 4 * self.model_dim


class TBlock(Module):
    """Weights of one layer.

    Per-head projections are stored stacked along a leading head axis:
    ``w_q[i]`` is the ``d x d_k`` query projection of head ``i``.
    """

    def __init__(self, cfg: BlockConfig, init: Initializer):
        d, m, dk, dm = cfg.model_dim, cfg.heads, cfg.head_dim, cfg.hidden
        self.cfg = cfg
        self.w_q = init.xavier((m, d, dk), fan_in=d, fan_out=m * dk)
        self.w_k = init.xavier((m, d, dk), fan_in=d, fan_out=m * dk)
        self.w_v = init.xavier((m, d, dk), fan_in=d, fan_out=m * dk)
        self.w_o = init.xavier((m * dk, d))
        self.w_1 = init.xavier((d, dm))
        self.b_1 = init.zeros((dm,))
        self.w_2 = init.xavier((dm, d))
        self.b_2 = init.zeros((d,))
        self.ln1_gamma = init.ones((d,))
        self.ln1_beta = init.zeros((d,))
        self.ln2_gamma = init.ones((d,))
        self.ln2_beta = init.zeros((d,))
        self.last_attention: np.ndarray | None = None

    def zero_output_projections(self) -> None:
        """Zero W^O, W_2 and b_2 so both residual branches vanish."""
        for p in (self.w_o, self.w_2, self.b_2):
            p.data[...] = 0.0

    def __call__(self, x: Tensor) -> Tensor:
        return t_block(x, self)


def attention(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention; returns (output, row-stochastic weights)."""
    if q.shape[-2] == 0 or k.shape[-2] == 0:
        raise DimensionError("attention over an empty sequence")
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention: shapes Q{q.shape} K{k.shape} V{v.shape} are inconsistent")
    scores = matmul(q, k.mT) / math.sqrt(q.shape[-1])
    weights = softmax(scores, axis=-1)
    return matmul(weights, v), weights


def multi_head_attention(x: Tensor, w: TBlock) -> Tensor:
    m, d, dk = w.w_q.shape
    if x.shape[-1] != d or w.w_o.shape != (m * dk, d):
        raise ConfigurationError(f"head shapes W^Q{w.w_q.shape} W^O{w.w_o.shape} do not fit input {x.shape}")
    lead, n = x.shape[:-2], x.shape[-2]
    xh = x.reshape(lead + (1, n, d))
    heads, weights = attention(matmul(xh, w.w_q), matmul(xh, w.w_k), matmul(xh, w.w_v))
    w.last_attention = weights.data
    nd = heads.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    concat = heads.transpose(perm).reshape(lead + (n, m * dk))
    return matmul(concat, w.w_o)


def mlp(x: Tensor, w: TBlock) -> Tensor:
    return linear(gelu(linear(x, w.w_1, w.b_1)), w.w_2, w.b_2)


def t_block(x: Tensor, w: TBlock) -> Tensor:
    x = x + multi_head_attention(layer_norm(x, w.ln1_gamma, w.ln1_beta), w)
    return x + mlp(layer_norm(x, w.ln2_gamma, w.ln2_beta), w)


class Aggregator(Module):
    """Pools ``n x d`` rows into one ``d`` vector with a single learned query."""

    def __init__(self, dim: int, init: Initializer):
        self.query = init.xavier((dim,), fan_in=dim, fan_out=1)
        self.ln_gamma = init.ones((dim,))
        self.ln_beta = init.zeros((dim,))
        self.last_weights: np.ndarray | None = None

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        return aggregate(x, self, mask)


def aggregate(x: Tensor, w: Aggregator, mask: np.ndarray | None = None) -> Tensor:
    """``sum_i alpha_i x_i`` with ``alpha = softmax_i(q . LN(x_i) / sqrt(d))``.

    ``mask`` (shape ``x.shape[:-1]``, truthy = real row) drops padding rows.
    """
    if x.ndim < 2 or x.shape[-2] == 0:
        raise DimensionError(f"aggregate needs at least one row, got shape {x.shape}")
    d = x.shape[-1]
    if w.query.shape != (d,):
        raise DimensionError(f"aggregate: query dim {w.query.shape} vs rows of dim {d}")
    normed = layer_norm(x, w.ln_gamma, w.ln_beta)
    scores = matmul(normed, w.query.reshape(d, 1)).reshape(x.shape[:-1]) / math.sqrt(d)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise DimensionError("aggregate: a sequence has no unmasked rows")
        scores = scores + np.where(mask, 0.0, -1e9).astype(x.dtype)
    alpha = softmax(scores, axis=-1)
    w.last_weights = alpha.data
    lead = x.shape[:-2]
    return matmul(alpha.reshape(lead + (1, x.shape[-2])), x).reshape(lead + (d,))


class PositionalTable(Module):
    """Learned ``max_len x d`` table added to the first ``n`` rows."""

    def __init__(self, max_len: int, dim: int, init: Initializer, enabled: bool = True):
        if max_len <= 0:
            raise ConfigurationError(f"max_len must be positive, got {max_len}")
        self.max_len = max_len
        self.enabled = enabled
        self.table = init.xavier((max_len, dim))

    def __call__(self, x: Tensor) -> Tensor:
        return positional_add(x, self)


def positional_add(x: Tensor, p: PositionalTable) -> Tensor:
    n = x.shape[-2]
    if n > p.max_len:
        raise CapacityError(f"sequence of length {n} exceeds positional capacity {p.max_len}")
    if not p.enabled:
        return x
    return x + p.table[:n]
