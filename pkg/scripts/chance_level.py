"""Untrained-model R@10 on 200 synthetic pairs over 10 seeds, against the binomial band around 10/200."""
import math

import numpy as np

from bicnet.harness.config import TrainConfig
from bicnet.harness.evaluate import evaluate
from bicnet.harness.synth import SyntheticSpec, synthesize
from bicnet.model import BicNet

PAIRS, SEEDS = 200, 10


def main():
    p = 10 / PAIRS
    rows = []
    for s in range(SEEDS):
        ds = synthesize(SyntheticSpec(pairs=PAIRS, seed=1000 + s))[0]
        cfg = TrainConfig(seed=s)
        ev = evaluate(BicNet(ds.dims, cfg.model_config(), s), ds, cfg.fusion())
        rows.append((ev.t2v.r_at[10], ev.v2t.r_at[10]))
        print(f"seed {s}: t2v.r10={rows[-1][0]:.3f} v2t.r10={rows[-1][1]:.3f}")
    band = 3 * math.sqrt(p * (1 - p) / (PAIRS * SEEDS))
    mean = np.mean(rows, axis=0)
    print(f"mean t2v.r10={mean[0]:.4f} v2t.r10={mean[1]:.4f} target={p:.3f} +/- {band:.4f}")


if __name__ == "__main__":
    main()
