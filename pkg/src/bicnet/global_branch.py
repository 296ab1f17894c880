"""Global video branch: fused 2D+3D frame features through a plain T-block stack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numerics import Initializer, Module, Tensor, linear
from .transformer import Aggregator, BlockConfig, PositionalTable, TBlock, aggregate, positional_add, t_block


@dataclass
class FrameFeatures:
    """``T x (d_a + d_m3)`` frame rows, appearance columns first."""

    data: np.ndarray
    appearance_dim: int
    motion_dim: int

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[0] <= 0:
            raise DimensionError(f"FrameFeatures needs a T x D array, got shape {self.data.shape}")
        if self.data.shape[1] != self.appearance_dim + self.motion_dim:
            raise DimensionError(
                f"frame rows have {self.data.shape[1]} columns, expected {self.appearance_dim}+{self.motion_dim}")
        if not np.isfinite(self.data).all():
            raise DimensionError("FrameFeatures contains non-finite values")

    @classmethod
    def concat(cls, appearance: np.ndarray, motion: np.ndarray) -> "FrameFeatures":
        appearance, motion = np.asarray(appearance), np.asarray(motion)
        return cls(np.concatenate([appearance, motion], axis=1), appearance.shape[1], motion.shape[1])

    @property
    def frames(self) -> int:
        return self.data.shape[0]


class GlobalBranch(Module):
    def __init__(self, frame_dim: int, frames: int, cfg: BlockConfig, init: Initializer,
                 frame_positional: bool = True):
        d = cfg.model_dim
        self.frame_dim = frame_dim
        self.fuse_w = init.xavier((frame_dim, d))
        self.fuse_b = init.zeros((d,))
        self.blocks = [TBlock(cfg, init) for _ in range(cfg.layers)]
        self.pe = PositionalTable(frames, d, init, enabled=frame_positional)
        self.aggregator = Aggregator(d, init)

    def zero_sublayers(self, query: bool = True) -> None:
        for blk in self.blocks:
            blk.zero_output_projections()
        if query:
            self.aggregator.query.data[...] = 0.0

    def __call__(self, frames: Tensor) -> Tensor:
        return video_embed(frames, self)


def fuse_frames(frames: Tensor, branch: GlobalBranch) -> Tensor:
    if frames.shape[-1] != branch.frame_dim:
        raise ConfigurationError(f"frame rows have {frames.shape[-1]} columns, branch expects {branch.frame_dim}")
    return linear(frames, branch.fuse_w, branch.fuse_b)


def video_features(frames: Tensor, branch: GlobalBranch) -> Tensor:
    x = positional_add(fuse_frames(frames, branch), branch.pe)
    for blk in branch.blocks:
        x = t_block(x, blk)
    return x


def video_embed(frames: Tensor, branch: GlobalBranch) -> Tensor:
    """``... x T x (d_a+d_m3)`` frames to ``... x d`` video embeddings."""
    return aggregate(video_features(frames, branch), branch.aggregator)
