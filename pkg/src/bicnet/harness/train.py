"""Mini-batch triplet training."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import NonFiniteError, UsageError
from ..model import BicNet
from ..numerics import AdamState, adam_step, backward, using_kind
from ..retrieval import triplet_loss
from .config import TrainConfig
from .dataset import Dataset


@dataclass
class TrainResult:
    model: BicNet
    adam: AdamState
    losses: list[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.adam.step


def epoch_batches(ds: Dataset, batch_size: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled ``(video indices, caption indices)`` batches for one epoch.

    Each video appears once per epoch with one caption drawn from its own.
    A trailing batch with fewer than two videos is dropped (no negative).
    """
    order = rng.permutation(len(ds))
    by_video = ds.captions_by_video()
    caps = np.array([by_video[v][int(rng.integers(len(by_video[v])))] for v in order])
    out = []
    for start in range(0, len(order), batch_size):
        vids = order[start:start + batch_size]
        if len(vids) >= 2:
            out.append((vids, caps[start:start + batch_size]))
    return out


def batch_loss(model: BicNet, ds: Dataset, vids, caps, cfg: TrainConfig):
    scores = model.score_batch(ds.regions[vids], ds.frames[vids], [ds.captions[c].tokens for c in caps], cfg.fusion())
    return triplet_loss(scores, cfg.loss())


def train(cfg: TrainConfig, ds: Dataset, model: BicNet | None = None, adam: AdamState | None = None,
          on_step: Callable[[int, float], None] | None = None,
          stop_after_epoch: Callable[[int, TrainResult], bool] | None = None) -> TrainResult:
    """Runs ``cfg.epochs`` epochs. Pass ``model``/``adam`` to resume.

    ``stop_after_epoch(epoch, result)`` returning true ends training early.
    """
    if cfg.batch_size > len(ds):
        raise UsageError(f"batch_size {cfg.batch_size} exceeds dataset size {len(ds)}")
    with using_kind(cfg.scalar_kind):
        model = model or BicNet(ds.dims, cfg.model_config(), cfg.seed)
        adam = adam or AdamState(learning_rate=cfg.learning_rate)
        result = TrainResult(model, adam)
        # data order stream kept separate from the init stream
        rng = np.random.default_rng([cfg.seed, 1])
        for epoch in range(cfg.epochs):
            for vids, caps in epoch_batches(ds, cfg.batch_size, rng):
                step = adam.step + 1
                model.zero_grad()
                try:
                    loss = batch_loss(model, ds, vids, caps, cfg)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"step {step}: {exc}") from exc
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteError(f"step {step}: loss is {value}")
                backward(loss)
                adam_step(model.parameters(), adam)
                result.losses.append(value)
                if on_step:
                    on_step(step, value)
            if stop_after_epoch and stop_after_epoch(epoch, result):
                break
    return result
