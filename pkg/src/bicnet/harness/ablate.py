"""Five-variant comparison in the layout of the SRT ablation table.

Columns: ``Method | t2v R@1 R@5 R@10 MedR | v2t R@1 R@5 R@10 MedR``. Recalls
are percentages with one decimal. Rows are the ``SRTVariant`` names.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import BicNet, Dims
from ..numerics import ScalarKind, Tensor, no_grad, using_kind
from ..relation import SRTVariant, relation_features
from .config import TrainConfig
from .dataset import Dataset
from .evaluate import Evaluation, evaluate
from .train import train

HEADER = ("Method", "t2v.R@1", "t2v.R@5", "t2v.R@10", "t2v.MedR", "v2t.R@1", "v2t.R@5", "v2t.R@10", "v2t.MedR")


@dataclass
class AblationRow:
    variant: SRTVariant
    evaluation: Evaluation
    final_loss: float

    def cells(self) -> list[str]:
        out = [self.variant.value]
        for m in (self.evaluation.t2v, self.evaluation.v2t):
            out += [f"{100 * m.r_at[k]:.1f}" for k in (1, 5, 10)] + [str(m.med_r)]
        return out


def ablate(cfg: TrainConfig, train_ds: Dataset, eval_ds: Dataset | None = None,
           on_row: Callable[[AblationRow], None] | None = None) -> list[AblationRow]:
    """Train every variant from ``cfg.seed`` and evaluate on ``eval_ds`` (default: the training set)."""
    eval_ds = eval_ds if eval_ds is not None else train_ds
    rows = []
    for variant in SRTVariant:
        run = train(cfg.replace(variant=variant), train_ds)
        row = AblationRow(variant, evaluate(run.model, eval_ds, cfg.fusion()), run.losses[-1])
        rows.append(row)
        if on_row:
            on_row(row)
    return rows


def format_table(header, rows: list[list[str]]) -> str:
    table = [list(header)] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    fmt = lambda r: " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    lines = [fmt(table[0]), "-+-".join("-" * w for w in widths)]
    return "\n".join(lines + [fmt(r) for r in table[1:]]) + "\n"


def ablation_table(rows: list[AblationRow]) -> str:
    return format_table(HEADER, [r.cells() for r in rows])


# -- zeroed-init probe ---------------------------------------------------------------

PROBE_HEADER = ("Method", "measured", "closed_form")


def closed_form_factor(variant: SRTVariant, layers: int) -> int:
    """Norm of zeroed-sublayer relation features over the pooled-projection norm."""
    s = 2 ** layers if variant.spatial_residual else 1
    t = 2 ** layers if variant.temporal_residual else 1
    return s * t + (s if variant.outer_residual else 0)


def zero_probe(cfg: TrainConfig, regions: np.ndarray) -> list[tuple[SRTVariant, float, int]]:
    """Zero every sublayer output projection and compare each variant against NonSRT.

    Positional tables are switched off so the pooled projection is the common base.
    """
    base = cfg.replace(frame_positional=False, proposal_positional=False)
    out = []
    with using_kind(ScalarKind.Verification64), no_grad():
        ref = None
        for variant in SRTVariant:
            model = BicNet(_dims_for(regions), base.replace(variant=variant).model_config(), cfg.seed)
            model.zero_sublayers()
            feats = relation_features(Tensor(regions), model.relation).data
            if ref is None:
                ref = np.linalg.norm(feats)
            out.append((variant, float(np.linalg.norm(feats) / ref), closed_form_factor(variant, cfg.layers)))
    return out


def _dims_for(regions: np.ndarray) -> Dims:
    t, n, d_r = regions.shape[-3:]
    return Dims(T=t, N=n, d_r=d_r)


def probe_table(results) -> str:
    return format_table(PROBE_HEADER, [[v.value, f"{m:.6f}", str(c)] for v, m, c in results])
