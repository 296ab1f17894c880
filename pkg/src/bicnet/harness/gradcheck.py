"""Finite-difference audit of the whole model on tiny dims."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import BicNet, Dims, ModelConfig
from ..numerics import ScalarKind, using_kind
from ..numerics.gradcheck import DEFAULT_STEP, analytic_grads, numeric_grad, relative_error
from ..relation import SRTVariant
from ..retrieval import FusionConfig, LossConfig, triplet_loss

TOLERANCE = 1e-4
TINY_DIMS = Dims(T=3, N=4, d_r=6, d_a=5, d_m3=3, d_t=7)


@dataclass
class GradcheckSpec:
    dim: int = 8
    layers: int = 2
    heads: int = 4
    batch: int = 4
    tokens: int = 3
    dims: Dims = TINY_DIMS
    max_entries: int = 12  # coordinates probed per parameter tensor
    seed: int = 0
    # margin 1 keeps every hinge active at init, away from the kink
    margin: float = 1.0
    variants: tuple[SRTVariant, ...] = tuple(SRTVariant)
    corrupt_group: str | None = None  # test hook: scales that group's analytic gradient


@dataclass
class GradcheckReport:
    errors: dict[str, dict[str, float]] = field(default_factory=dict)  # variant -> group -> max rel err

    def failures(self, tol: float = TOLERANCE) -> list[tuple[str, str, float]]:
        return [(v, g, e) for v, groups in self.errors.items() for g, e in groups.items() if not e < tol]

    @property
    def worst(self) -> float:
        return max(e for groups in self.errors.values() for e in groups.values())

    def lines(self, tol: float = TOLERANCE) -> list[str]:
        out = []
        for v, groups in self.errors.items():
            for g, e in groups.items():
                out.append(f"{v} {g} {e:.3e} {'ok' if e < tol else 'FAIL'}")
        return out


def group_of(name: str) -> str:
    """Owning module path, e.g. ``relation.spatial.0.w_q -> relation.spatial.0``."""
    return name.rsplit(".", 1)[0]


def run_gradcheck(spec: GradcheckSpec = GradcheckSpec()) -> GradcheckReport:
    report = GradcheckReport()
    d = spec.dims
    with using_kind(ScalarKind.Verification64):
        rng = np.random.default_rng(spec.seed)
        regions = rng.standard_normal((spec.batch, d.T, d.N, d.d_r))
        frames = rng.standard_normal((spec.batch, d.T, d.frame_dim))
        tokens = [rng.standard_normal((spec.tokens, d.d_t)) for _ in range(spec.batch)]
        for variant in spec.variants:
            cfg = ModelConfig(spec.dim, spec.layers, spec.heads, None, variant, True, True)
            model = BicNet(d, cfg, spec.seed)
            params = model.parameters()

            def loss():
                return triplet_loss(model.score_batch(regions, frames, tokens, FusionConfig(0.5)),
                                    LossConfig(spec.margin))

            grads = analytic_grads(loss, params)
            pick = np.random.default_rng([spec.seed, 7])
            groups: dict[str, float] = {}
            for p, g in zip(params, grads):
                grp = group_of(p.name)
                if grp == spec.corrupt_group:
                    g = g * 1.5 + 1e-3
                n = p.size
                entries = list(range(n)) if n <= spec.max_entries else \
                    sorted(pick.choice(n, size=spec.max_entries, replace=False).tolist())
                num = numeric_grad(loss, p, DEFAULT_STEP, entries)
                err = float(relative_error(g.reshape(-1)[entries], num).max())
                groups[grp] = max(groups.get(grp, 0.0), err)
            report.errors[variant.value] = groups
    return report
