"""Joint-space scoring, the triplet ranking objective, and ranking metrics.

Score matrices are indexed ``[query, item]``. For training batches the
query axis is text and the item axis is video, so ``scores[i, j]`` is the
similarity of caption ``i`` with video ``j`` and the diagonal holds the
matched pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, UsageError
from .numerics import Tensor, amax, cosine, cosine_matrix, relu, tsum


@dataclass(frozen=True)
class FusionConfig:
    lam: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"lambda must lie in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    hardest_negative: bool = False

    def __post_init__(self):
        if not 0.0 < self.margin <= 1.0:
            raise ConfigurationError(f"margin must lie in (0, 1], got {self.margin}")


def similarity(f_r: Tensor, f_v: Tensor, f_t: Tensor, cfg: FusionConfig) -> Tensor:
    if not f_r.shape[-1] == f_v.shape[-1] == f_t.shape[-1]:
        raise DimensionError(f"embedding dims differ: F_r {f_r.shape}, F_v {f_v.shape}, F_t {f_t.shape}")
    return cfg.lam * cosine(f_r, f_t) + (1.0 - cfg.lam) * cosine(f_v, f_t)


def similarity_matrix(f_r: Tensor, f_v: Tensor, f_t: Tensor, cfg: FusionConfig) -> Tensor:
    """``Q x V`` fused scores for ``Q`` text rows against ``V`` videos."""
    if not f_r.shape[-1] == f_v.shape[-1] == f_t.shape[-1]:
        raise DimensionError(f"embedding dims differ: F_r {f_r.shape}, F_v {f_v.shape}, F_t {f_t.shape}")
    if f_r.shape[0] != f_v.shape[0]:
        raise DimensionError(f"relation and global embeddings cover {f_r.shape[0]} vs {f_v.shape[0]} videos")
    return cfg.lam * cosine_matrix(f_t, f_r) + (1.0 - cfg.lam) * cosine_matrix(f_t, f_v)


def triplet_loss(scores: Tensor, cfg: LossConfig) -> Tensor:
    """Bidirectional hinge loss over in-batch negatives of a square batch.

    Default: mean over ordered pairs ``i != j`` of
    ``[d - s_ii + s_ji]_+ + [d - s_ii + s_ij]_+``. With ``hardest_negative``
    only the highest-scoring negative per positive and direction is kept and
    the result is averaged over positives.
    """
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise UsageError(f"triplet_loss needs a square batch score matrix, got shape {scores.shape}")
    b = scores.shape[0]
    if b < 2:
        raise UsageError("triplet_loss needs at least one negative (batch of 2 or more)")
    eye = np.eye(b, dtype=bool)
    diag = np.arange(b)
    pos = scores[diag, diag]  # s_ii, shape (b,)
    off = (~eye).astype(scores.dtype)
    if cfg.hardest_negative:
        blocked = scores + np.where(eye, -4.0, 0.0).astype(scores.dtype)  # cosines lie in [-1, 1]
        # for video i (column): texts j != i; for text i (row): videos j != i
        worst_text = amax(blocked, axis=0)
        worst_video = amax(blocked, axis=1)
        return tsum(relu(cfg.margin - pos + worst_text) + relu(cfg.margin - pos + worst_video)) / float(b)
    # column-wise term: video i against caption j, s_ji sits at scores[j, i]
    per_video = relu(cfg.margin - pos.reshape(1, b) + scores) * off
    per_text = relu(cfg.margin - pos.reshape(b, 1) + scores) * off
    return (tsum(per_video) + tsum(per_text)) / float(b * (b - 1))


@dataclass
class ScoreMatrix:
    scores: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores)
        self.ground_truth = np.asarray(self.ground_truth, dtype=np.int64)
        if self.scores.ndim != 2 or min(self.scores.shape) <= 0:
            raise DimensionError(f"score matrix must be Q x V with Q, V >= 1, got {self.scores.shape}")
        if self.ground_truth.shape != (self.scores.shape[0],):
            raise DimensionError(f"need one ground-truth index per query, got {self.ground_truth.shape}")
        if ((self.ground_truth < 0) | (self.ground_truth >= self.scores.shape[1])).any():
            raise DimensionError("ground-truth index outside the item range")
        if not np.isfinite(self.scores).all():
            raise DimensionError("score matrix contains non-finite values")

    @property
    def queries(self) -> int:
        return self.scores.shape[0]

    @property
    def items(self) -> int:
        return self.scores.shape[1]


@dataclass
class RetrievalMetrics:
    r_at: dict[int, float] = field(default_factory=dict)
    med_r: int = 1


def rank_of_truth(sm: ScoreMatrix) -> np.ndarray:
    """1-based rank of each query's true item; ties go to the lower index."""
    rows = np.arange(sm.queries)
    truth = sm.scores[rows, sm.ground_truth][:, None]
    higher = (sm.scores > truth).sum(axis=1)
    cols = np.arange(sm.items)[None, :]
    tied_before = ((sm.scores == truth) & (cols < sm.ground_truth[:, None])).sum(axis=1)
    return 1 + higher + tied_before


def recall_at_k(ranks: np.ndarray, k: int) -> float:
    if k < 1:
        raise UsageError(f"recall@K needs K >= 1, got {k}")
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise UsageError("recall@K over zero queries")
    return float((ranks <= k).mean())


def median_rank(ranks: np.ndarray) -> int:
    """Lower median: element ``ceil(n/2)`` (1-based) of the sorted ranks."""
    ranks = np.sort(np.asarray(ranks))
    if ranks.size == 0:
        raise UsageError("median rank over zero queries")
    return int(ranks[math.ceil(ranks.size / 2) - 1])


def retrieval_metrics(sm: ScoreMatrix, ks=(1, 5, 10)) -> RetrievalMetrics:
    ranks = rank_of_truth(sm)
    return RetrievalMetrics({k: recall_at_k(ranks, k) for k in ks}, median_rank(ranks))
