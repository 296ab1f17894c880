"""Nonlinear primitives with hand-derived gradients."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from ..errors import DimensionError
from .tensor import Tensor, _norm_axes, as_tensor, matmul, tsum

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _norm_axes(axis, x.ndim)[0]
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=ax, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=ax, keepdims=True)),)

    return Tensor._result(y, (x,), backward, "softmax")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF from erf."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT2PI
        return (g * (cdf + xd * pdf),)

    return Tensor._result((xd * cdf).astype(xd.dtype, copy=False), (x,), backward, "gelu")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    gamma, beta = as_tensor(gamma, x), as_tensor(beta, x)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: last extent {d} vs gamma {gamma.shape}, beta {beta.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    eta = np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered / eta
    gd = gamma.data
    lead = tuple(range(xd.ndim - 1))

    def backward(g):
        dxhat = g * gd
        dx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
              - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) / eta
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._result(xhat * gd + beta.data, (x, gamma, beta), backward, "layer_norm")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Unit vectors along ``axis``; an all-zero slice maps to zero."""
    ax = _norm_axes(axis, x.ndim)[0]
    norm = np.sqrt((x.data * x.data).sum(axis=ax, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0).astype(x.dtype)
    y = x.data / safe

    def backward(g):
        return ((g - y * (g * y).sum(axis=ax, keepdims=True)) / safe,)

    return Tensor._result(y, (x,), backward, "l2_normalize")


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity along the last axis; 0 when either side is zero."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"cosine: dims differ, {a.shape} vs {b.shape}")
    return tsum(l2_normalize(a) * l2_normalize(b), -1)


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """``out[..., i, j] = cosine(a[..., i, :], b[..., j, :])``."""
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"cosine_matrix: dims differ, {a.shape} vs {b.shape}")
    return matmul(l2_normalize(a), l2_normalize(b).mT)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else out + bias
