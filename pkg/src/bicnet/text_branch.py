"""Text branch over precomputed, already-contextualized token features.

No transformer here and no positions: projection followed by attention
pooling, so the embedding ignores token order.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numerics import Initializer, Module, Tensor, concat, linear, take
from .transformer import Aggregator, aggregate


@dataclass
class TokenSequence:
    data: np.ndarray  # S x d_t

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or min(self.data.shape) <= 0:
            raise DimensionError(f"TokenSequence needs an S x d_t array with S >= 1, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise DimensionError("TokenSequence contains non-finite values")

    @property
    def tokens(self) -> int:
        return self.data.shape[0]


class TextBranch(Module):
    def __init__(self, token_dim: int, dim: int, init: Initializer):
        self.token_dim = token_dim
        self.proj_w = init.xavier((token_dim, dim))
        self.proj_b = init.zeros((dim,))
        self.aggregator = Aggregator(dim, init)

    def __call__(self, tokens: Tensor) -> Tensor:
        return text_embed(tokens, self)


def text_embed(tokens: Tensor, branch: TextBranch) -> Tensor:
    """``... x S x d_t`` token features to ``... x d`` text embeddings."""
    if tokens.shape[-1] != branch.token_dim:
        raise ConfigurationError(f"tokens have dim {tokens.shape[-1]}, branch expects {branch.token_dim}")
    return aggregate(linear(tokens, branch.proj_w, branch.proj_b), branch.aggregator)


def embed_token_sequences(seqs: Sequence[np.ndarray], branch: TextBranch) -> Tensor:
    """Embed captions of varying length, batching equal lengths together.

    Returns rows in the order of ``seqs``.
    """
    buckets: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(seqs):
        buckets[np.shape(s)[0]].append(i)
    parts, order = [], []
    for length in sorted(buckets):
        idx = buckets[length]
        parts.append(text_embed(Tensor(np.stack([seqs[i] for i in idx])), branch))
        order.extend(idx)
    out = parts[0] if len(parts) == 1 else concat(parts, axis=0)
    if order == sorted(order):
        return out
    return take(out, np.argsort(order), axis=0)
