"""Relation branch: spatio-temporal residual transformer over region proposals.

Per frame, a stack of T-blocks mixes the N proposal embeddings; proposals
are mean-pooled into one row per frame; a second stack mixes frames; an
attention pooling layer yields the relation embedding. The five variants
differ only in which extra residual connections are present:

===================  =================  ==================  ===============
variant              per spatial layer  per temporal layer  outer residual
===================  =================  ==================  ===============
NonSRT               no                 no                  no
SpatialSRT           yes                no                  no
TemporalSRT          no                 yes                 no
SpatioTemporalSRT    yes                yes                 no
FullSRT              yes                yes                 yes
===================  =================  ==================  ===============
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numerics import Initializer, Module, Tensor, linear
from .transformer import Aggregator, BlockConfig, PositionalTable, TBlock, aggregate, positional_add, t_block


class SRTVariant(enum.Enum):
    NonSRT = "NonSRT"
    SpatialSRT = "SpatialSRT"
    TemporalSRT = "TemporalSRT"
    SpatioTemporalSRT = "SpatioTemporalSRT"
    FullSRT = "FullSRT"

    @property
    def spatial_residual(self) -> bool:
        return self in (SRTVariant.SpatialSRT, SRTVariant.SpatioTemporalSRT, SRTVariant.FullSRT)

    @property
    def temporal_residual(self) -> bool:
        return self in (SRTVariant.TemporalSRT, SRTVariant.SpatioTemporalSRT, SRTVariant.FullSRT)

    @property
    def outer_residual(self) -> bool:
        return self is SRTVariant.FullSRT

    @classmethod
    def parse(cls, text: str) -> "SRTVariant":
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown SRT variant {text!r}; expected one of {[v.value for v in cls]}") from None


@dataclass
class RegionSequence:
    """``T x N x d_r`` proposal features for one clip.

    Frames with fewer than N detections are zero-padded; all-zero rows are
    treated as padding unless an explicit ``valid`` mask is given.
    """

    data: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) <= 0:
            raise DimensionError(f"RegionSequence needs a T x N x d_r array, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise DimensionError("RegionSequence contains non-finite values")
        if self.valid is None:
            self.valid = padding_mask(self.data)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.data.shape[:2]:
            raise DimensionError(f"valid mask {self.valid.shape} does not match {self.data.shape[:2]}")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def proposals_per_frame(self) -> int:
        return self.data.shape[1]

    @property
    def region_dim(self) -> int:
        return self.data.shape[2]


def padding_mask(regions: np.ndarray) -> np.ndarray:
    """True for real proposals, False for all-zero padding rows."""
    return np.asarray(regions).any(axis=-1)


class RelationBranch(Module):
    def __init__(self, region_dim: int, frames: int, proposals: int, cfg: BlockConfig, init: Initializer,
                 variant: SRTVariant = SRTVariant.FullSRT, frame_positional: bool = True,
                 proposal_positional: bool = False):
        d = cfg.model_dim
        self.variant = variant
        self.proj_w = init.xavier((region_dim, d))
        self.proj_b = init.zeros((d,))
        self.spatial = [TBlock(cfg, init) for _ in range(cfg.layers)]
        self.temporal = [TBlock(cfg, init) for _ in range(cfg.layers)]
        self.proposal_pe = PositionalTable(proposals, d, init, enabled=proposal_positional)
        self.temporal_pe = PositionalTable(frames, d, init, enabled=frame_positional)
        self.aggregator = Aggregator(d, init)

    def zero_sublayers(self, query: bool = True) -> None:
        for blk in self.spatial + self.temporal:
            blk.zero_output_projections()
        if query:
            self.aggregator.query.data[...] = 0.0

    def __call__(self, regions: Tensor, valid: np.ndarray | None = None) -> Tensor:
        return relation_embed(regions, self, valid=valid)


def spatial_stage(frames: Tensor, branch: RelationBranch, variant: SRTVariant | None = None) -> Tensor:
    """Stack over the proposal axis (``... x N x d``) with optional per-layer skip."""
    variant = variant or branch.variant
    if frames.shape[-2] == 0:
        raise DimensionError("spatial stage over a frame with no proposals")
    y = frames
    for blk in branch.spatial:
        out = t_block(y, blk)
        y = out + y if variant.spatial_residual else out
    return y


def pool_proposals(stage_out: Tensor, valid: np.ndarray | None = None) -> Tensor:
    """Mean over the proposal axis (``... x T x N x d -> ... x T x d``), real rows only."""
    if valid is None:
        return stage_out.mean(axis=-2)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != stage_out.shape[:-1]:
        raise DimensionError(f"pool mask {valid.shape} vs features {stage_out.shape}")
    weights = valid.astype(stage_out.dtype)
    counts = np.maximum(weights.sum(axis=-1, keepdims=True), 1.0)
    return (stage_out * (weights / counts)[..., None]).sum(axis=-2)


def temporal_stage(z: Tensor, branch: RelationBranch, variant: SRTVariant | None = None) -> Tensor:
    """Stack over the frame axis (``... x T x d``) with optional per-layer skip."""
    variant = variant or branch.variant
    if z.shape[-2] == 0:
        raise DimensionError("temporal stage over zero frames")
    for blk in branch.temporal:
        out = t_block(z, blk)
        z = out + z if variant.temporal_residual else out
    return z


def relation_features(regions: Tensor, branch: RelationBranch, variant: SRTVariant | None = None,
                      valid: np.ndarray | None = None) -> Tensor:
    """Pre-aggregation frame features, ``... x T x d``.

    The outer residual (FullSRT) adds the temporal stack's input, i.e. the
    pooled per-frame proposal means (plus positions when enabled).
    """
    variant = variant or branch.variant
    y = linear(regions, branch.proj_w, branch.proj_b)
    y = positional_add(y, branch.proposal_pe)
    y = spatial_stage(y, branch, variant)
    z0 = positional_add(pool_proposals(y, valid), branch.temporal_pe)
    z = temporal_stage(z0, branch, variant)
    return z + z0 if variant.outer_residual else z


def relation_embed(regions: Tensor, branch: RelationBranch, variant: SRTVariant | None = None,
                   valid: np.ndarray | None = None) -> Tensor:
    """``... x T x N x d_r`` regions to ``... x d`` relation embeddings."""
    return aggregate(relation_features(regions, branch, variant, valid), branch.aggregator)
