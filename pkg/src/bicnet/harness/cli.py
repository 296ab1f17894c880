"""``bicnet`` command line."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import BicNetError, UsageError
from ..model import Dims
from ..numerics import no_grad, using_kind
from ..relation import SRTVariant
from ..retrieval import FusionConfig
from .ablate import ablate, ablation_table, probe_table, zero_probe
from .blobs import write_blob
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .dataset import load_dataset
from .evaluate import evaluate, model_kind
from .gradcheck import GradcheckSpec, run_gradcheck
from .synth import SyntheticSpec, generate_synthetic
from .train import train


def _config(path: str | None) -> TrainConfig:
    return TrainConfig.load(path) if path else TrainConfig()


def cmd_synth(a) -> int:
    dims = Dims(a.T, a.N, a.d_r, a.d_a, a.d_m3, a.d_t)
    spec = SyntheticSpec(a.pairs, a.latent_dim, a.noise, dims, a.seed, a.min_tokens, a.max_tokens,
                         a.captions_per_video)
    print(generate_synthetic(spec, a.out))
    return 0


def cmd_train(a) -> int:
    cfg = _config(a.config)
    ds = load_dataset(a.data, a.split)
    every = max(a.log_every, 1)

    def log(step, loss):
        if step % every == 0:
            print(json.dumps({"step": step, "loss": loss}), flush=True)

    run = train(cfg, ds, on_step=log)
    save_checkpoint(Checkpoint.capture(cfg, run.model, run.adam), a.out)
    return 0


def cmd_eval(a) -> int:
    ck = load_checkpoint(a.checkpoint)
    ds = load_dataset(a.data, a.split)
    lam = ck.config.lam if a.lam is None else a.lam
    sys.stdout.write(evaluate(ck.build_model(), ds, FusionConfig(lam)).jsonl())
    return 0


def cmd_ablate(a) -> int:
    cfg = _config(a.config)
    ds = load_dataset(a.data, a.split)
    if a.probe:
        sys.stdout.write(probe_table(zero_probe(cfg, ds.regions[: min(len(ds), 4)])))
        return 0
    eval_ds = load_dataset(a.data, a.eval_split) if a.eval_split else None
    sys.stdout.write(ablation_table(ablate(cfg, ds, eval_ds)))
    return 0


def cmd_gradcheck(a) -> int:
    variants = tuple(SRTVariant.parse(v) for v in a.variant) if a.variant else tuple(SRTVariant)
    report = run_gradcheck(GradcheckSpec(max_entries=a.max_entries, seed=a.seed, variants=variants,
                                         corrupt_group=a.corrupt_group))
    for line in report.lines():
        print(line)
    bad = report.failures()
    for v, g, e in bad:
        print(f"gradcheck failed: {v} group {g} relative error {e:.3e}", file=sys.stderr)
    return 1 if bad else 0


def cmd_dump_attention(a) -> int:
    ck = load_checkpoint(a.checkpoint)
    ds = load_dataset(a.data, a.split)
    model = ck.build_model()
    idx = ds.video_ids.index(a.item) if a.item in ds.video_ids else _int_item(a.item, len(ds))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    with using_kind(model_kind(model)), no_grad():
        model.embed_videos(ds.regions[idx:idx + 1], ds.frames[idx:idx + 1])
    blocks = {"relation.spatial": model.relation.spatial, "relation.temporal": model.relation.temporal,
              "global": model.global_branch.blocks}
    written = []
    for prefix, stack in blocks.items():
        for layer, blk in enumerate(stack):
            path = out / f"{prefix}.{layer}.bicf"
            write_blob(path, blk.last_attention[0])
            written.append(path)
    for prefix, agg in (("relation.aggregator", model.relation.aggregator),
                        ("global.aggregator", model.global_branch.aggregator)):
        path = out / f"{prefix}.bicf"
        write_blob(path, agg.last_weights[0])
        written.append(path)
    for p in written:
        print(p)
    return 0


def _int_item(item: str, n: int) -> int:
    try:
        idx = int(item)
    except ValueError:
        raise UsageError(f"unknown item {item!r}") from None
    if not 0 <= idx < n:
        raise UsageError(f"item index {idx} out of range for {n} videos")
    return idx


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bicnet", description="Bi-branch text-video retrieval at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic paired dataset")
    s.add_argument("--pairs", type=int, default=32)
    s.add_argument("--latent-dim", type=int, default=16)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--captions-per-video", type=int, default=1)
    s.add_argument("--min-tokens", type=int, default=4)
    s.add_argument("--max-tokens", type=int, default=8)
    for key, val in Dims().to_dict().items():
        s.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int, default=val)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    t = sub.add_parser("train", help="train and write a checkpoint")
    t.add_argument("--config")
    t.add_argument("--data", required=True, help="manifest path")
    t.add_argument("--split", default="train")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--log-every", type=int, default=1)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="metric records for a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default=None)
    e.add_argument("--lambda", dest="lam", type=float, default=None)
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("ablate", help="five-variant comparison table")
    b.add_argument("--config")
    b.add_argument("--data", required=True)
    b.add_argument("--split", default="train")
    b.add_argument("--eval-split", default=None)
    b.add_argument("--probe", action="store_true", help="zeroed-init factor check instead of training")
    b.set_defaults(fn=cmd_ablate)

    g = sub.add_parser("gradcheck", help="finite-difference audit on tiny dims")
    g.add_argument("--variant", action="append", choices=[v.value for v in SRTVariant])
    g.add_argument("--max-entries", type=int, default=12)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--corrupt-group", default=None, help=argparse.SUPPRESS)
    g.set_defaults(fn=cmd_gradcheck)

    d = sub.add_parser("dump-attention", help="write per-layer attention weights as blobs")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--split", default=None)
    d.add_argument("--item", required=True, help="video id or index")
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_dump_attention)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BicNetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
