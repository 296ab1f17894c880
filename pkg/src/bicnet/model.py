"""Full bi-branch model: relation + global video branches and the text branch."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .global_branch import GlobalBranch, video_embed
from .numerics import Initializer, Module, Tensor
from .relation import RelationBranch, SRTVariant, padding_mask, relation_embed
from .retrieval import FusionConfig, similarity_matrix
from .text_branch import TextBranch, embed_token_sequences
from .transformer import BlockConfig


@dataclass(frozen=True)
class Dims:
    """Feature extents fixed by the dataset."""

    T: int = 4
    N: int = 5
    d_r: int = 40
    d_a: int = 32
    d_m3: int = 24
    d_t: int = 48

    def __post_init__(self):
        for key, val in asdict(self).items():
            if int(val) <= 0:
                raise ConfigurationError(f"dims.{key} must be positive, got {val}")

    @property
    def frame_dim(self) -> int:
        return self.d_a + self.d_m3

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 4
    mlp_hidden: int | None = None
    variant: SRTVariant = SRTVariant.FullSRT
    frame_positional: bool = True
    proposal_positional: bool = False

    def block(self) -> BlockConfig:
        return BlockConfig(self.dim, self.heads, self.mlp_hidden, self.layers)


class BicNet(Module):
    def __init__(self, dims: Dims, cfg: ModelConfig, seed: int = 0):
        init = Initializer(seed)
        block = cfg.block()
        self.dims = dims
        self.cfg = cfg
        self.relation = RelationBranch(dims.d_r, dims.T, dims.N, block, init, cfg.variant,
                                       cfg.frame_positional, cfg.proposal_positional)
        self.global_branch = GlobalBranch(dims.frame_dim, dims.T, block, init, cfg.frame_positional)
        self.text = TextBranch(dims.d_t, cfg.dim, init)
        self.assign_names()

    @property
    def variant(self) -> SRTVariant:
        return self.relation.variant

    def embed_videos(self, regions: np.ndarray, frames: np.ndarray) -> tuple[Tensor, Tensor]:
        """``B x T x N x d_r`` regions and ``B x T x D`` frames to ``(F_r, F_v)``."""
        valid = padding_mask(regions)
        f_r = relation_embed(Tensor(regions), self.relation, valid=None if valid.all() else valid)
        f_v = video_embed(Tensor(frames), self.global_branch)
        return f_r, f_v

    def embed_texts(self, tokens: Sequence[np.ndarray]) -> Tensor:
        return embed_token_sequences(tokens, self.text)

    def score_batch(self, regions: np.ndarray, frames: np.ndarray, tokens: Sequence[np.ndarray],
                    fusion: FusionConfig) -> Tensor:
        f_r, f_v = self.embed_videos(regions, frames)
        return similarity_matrix(f_r, f_v, self.embed_texts(tokens), fusion)

    def zero_sublayers(self, query: bool = True) -> None:
        self.relation.zero_sublayers(query)
        self.global_branch.zero_sublayers(query)
        if query:
            self.text.aggregator.query.data[...] = 0.0
