"""Blobs, manifests, synthetic data, checkpoints, training, evaluation, CLI."""
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicnet.errors import ConfigurationError, FormatError, IngestError, NonFiniteError, UsageError
from bicnet.harness.ablate import HEADER, closed_form_factor, zero_probe
from bicnet.harness.blobs import decode_blob, encode_blob, read_blob, write_blob
from bicnet.harness.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from bicnet.harness.cli import main
from bicnet.harness.config import TrainConfig
from bicnet.harness.dataset import Dataset, load_dataset, write_dataset
from bicnet.harness.evaluate import evaluate
from bicnet.harness.gradcheck import GradcheckSpec, run_gradcheck
from bicnet.harness.synth import SyntheticSpec, generate_synthetic, latent_maps, synthesize
from bicnet.harness.train import epoch_batches, train
from bicnet.model import Dims
from bicnet.numerics import ScalarKind
from bicnet.relation import SRTVariant
from bicnet.retrieval import FusionConfig

SMALL = Dims(T=3, N=4, d_r=6, d_a=5, d_m3=3, d_t=7)


def small_cfg(**kw):
    base = dict(dim=8, d_g=8, layers=1, heads=2, batch_size=4, epochs=2)
    base.update(kw)
    return TrainConfig(**base)


def small_data(pairs=6, **kw):
    return synthesize(SyntheticSpec(pairs=pairs, dims=SMALL, latent_dim=4, min_tokens=2, max_tokens=3, **kw))[0]


# -- blobs --------------------------------------------------------------------------

def test_blob_header_bytes():
    buf = encode_blob(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert buf[:4] == b"BICF"
    assert struct.unpack("<III", buf[4:16]) == (1, 2, 2)
    assert struct.unpack("<I", buf[16:20]) == (3,)
    assert struct.unpack("<6f", buf[20:]) == (0, 1, 2, 3, 4, 5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 2**31 - 1))
def test_blob_round_trip(shape, seed):
    arr = np.random.default_rng(seed).standard_normal(shape).astype(np.float32)
    back = decode_blob(encode_blob(arr))
    assert back.dtype == np.float32 and np.array_equal(back, arr)


def test_blob_rejects_corruption():
    buf = encode_blob(np.ones((2, 2), np.float32))
    with pytest.raises(FormatError):
        decode_blob(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        decode_blob(buf[:4] + struct.pack("<I", 9) + buf[8:])
    with pytest.raises(FormatError):
        decode_blob(buf[:-1])
    with pytest.raises(FormatError):
        decode_blob(buf + b"\0\0\0\0")


def test_read_blob_shape_check(tmp_path):
    write_blob(tmp_path / "a.bicf", np.zeros((4, 6, 2)))
    assert read_blob(tmp_path / "a.bicf", (4, None, 2)).shape == (4, 6, 2)
    with pytest.raises(IngestError, match=r"expected shape \(4, 5, 2\), found \(4, 6, 2\)"):
        read_blob(tmp_path / "a.bicf", (4, 5, 2))
    with pytest.raises(IngestError, match="missing"):
        read_blob(tmp_path / "b.bicf")


# -- config --------------------------------------------------------------------------

def test_config_round_trip_text():
    cfg = TrainConfig(lam=0.25, variant=SRTVariant.TemporalSRT, scalar_kind=ScalarKind.Verification64,
                      frame_positional=False)
    assert TrainConfig.loads(cfg.dumps()) == cfg


def test_config_defaults_match_desk_values():
    cfg = TrainConfig()
    assert (cfg.lam, cfg.margin, cfg.layers, cfg.heads, cfg.dim, cfg.batch_size, cfg.learning_rate) == \
        (0.5, 0.2, 2, 4, 64, 8, 2e-4)


@pytest.mark.parametrize("text", ["lamda = 0.3", "lam = 2", "margin = 0", "batch_size = 1",
                                  "lam = 0.1\nlam = 0.2", "variant = HalfSRT", "layers = 1.5", "no equals sign",
                                  "d_g = 32"])
def test_config_rejections(text):
    with pytest.raises(ConfigurationError):
        TrainConfig.loads(text)


def test_config_comments_and_blank_lines():
    cfg = TrainConfig.loads("# run\n\nlam = 0.0  # global only\nhardest_negative = true\n")
    assert cfg.lam == 0.0 and cfg.hardest_negative


# -- dataset ---------------------------------------------------------------------------

def test_dataset_round_trip_bit_exact(tmp_path):
    ds = small_data(captions_per_video=2)
    back = load_dataset(write_dataset(tmp_path, ds))
    assert back.video_ids == ds.video_ids and back.dims == ds.dims
    assert np.array_equal(back.regions, ds.regions) and np.array_equal(back.frames, ds.frames)
    assert [(c.id, c.video) for c in back.captions] == [(c.id, c.video) for c in ds.captions]
    assert all(np.array_equal(a.tokens, b.tokens) for a, b in zip(back.captions, ds.captions))


def test_empty_manifest_is_valid_dataset(tmp_path):
    ds = small_data(pairs=0)
    back = load_dataset(write_dataset(tmp_path, ds))
    assert len(back) == 0 and back.regions.shape == (0, 3, 4, 6)


def _manifest(tmp_path):
    path = write_dataset(tmp_path, small_data(pairs=3))
    return path, json.loads(path.read_text())


@pytest.mark.parametrize("field,shape", [("region_file", (3, 5, 6)), ("region_file", (3, 4, 7)),
                                          ("region_file", (2, 4, 6)), ("frame_file", (3, 9)),
                                          ("frame_file", (4, 8)), ("region_file", (3, 4))])
def test_ingest_rejects_dims_mismatch(tmp_path, field, shape):
    path, doc = _manifest(tmp_path)
    write_blob(tmp_path / doc["items"][1][field], np.zeros(shape))
    with pytest.raises(IngestError, match="expected shape"):
        load_dataset(path)


def test_ingest_rejects_token_width(tmp_path):
    path, doc = _manifest(tmp_path)
    write_blob(tmp_path / doc["items"][0]["captions"][0]["token_file"], np.zeros((3, 8)))
    with pytest.raises(IngestError, match="expected shape"):
        load_dataset(path)


def test_ingest_rejects_missing_file_and_duplicate_caption(tmp_path):
    path, doc = _manifest(tmp_path)
    (tmp_path / doc["items"][2]["frame_file"]).unlink()
    with pytest.raises(IngestError, match="missing"):
        load_dataset(path)
    path, doc = _manifest(tmp_path)
    doc["items"][1]["captions"][0]["id"] = doc["items"][0]["captions"][0]["id"]
    path.write_text(json.dumps(doc))
    with pytest.raises(IngestError, match="more than one video"):
        load_dataset(path)


def test_split_filter(tmp_path):
    ds = small_data(pairs=4)
    ds.splits = ["train", "test", "train", "test"]
    back = load_dataset(write_dataset(tmp_path, ds), split="test")
    assert back.video_ids == ["v0001", "v0003"]
    assert [c.video for c in back.captions] == [0, 1]


# -- synthetic data --------------------------------------------------------------------

def test_synth_noise_free_slots_are_linear_images():
    spec = SyntheticSpec(pairs=5, dims=SMALL, latent_dim=4, noise_scale=0.0, seed=3)
    ds, z = synthesize(spec)
    maps = latent_maps(spec, np.random.default_rng(3))
    for p in range(5):
        for t in range(SMALL.T):
            assert np.allclose(ds.frames[p, t], maps.frames[t] @ z[p], atol=1e-6)
            for n in range(SMALL.N):
                assert np.allclose(ds.regions[p, t, n], maps.regions[t, n] @ z[p], atol=1e-6)
        toks = ds.captions[p].tokens
        for s in range(len(toks)):
            assert np.allclose(toks[s], maps.tokens[s] @ z[p], atol=1e-6)


def test_synth_linear_probe_pairs_perfectly():
    spec = SyntheticSpec(pairs=200, noise_scale=0.0, seed=11, min_tokens=5, max_tokens=5)
    ds, _ = synthesize(spec)
    x = ds.frames.mean(axis=1).astype(np.float64)
    y = np.stack([c.tokens.mean(axis=0) for c in ds.captions]).astype(np.float64)
    w, *_ = np.linalg.lstsq(x, y, rcond=None)
    pred = x @ w
    dist = ((y[:, None, :] - pred[None, :, :]) ** 2).sum(-1)
    assert np.array_equal(dist.argmin(axis=1), np.arange(200))


def test_synth_deterministic_tree(tmp_path):
    spec = SyntheticSpec(pairs=3, dims=SMALL, seed=5)
    a, b = generate_synthetic(spec, tmp_path / "a"), generate_synthetic(spec, tmp_path / "b")
    files_a = sorted(p.relative_to(a.parent) for p in a.parent.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b.parent) for p in b.parent.rglob("*") if p.is_file())
    assert files_a == files_b
    assert all((a.parent / f).read_bytes() == (b.parent / f).read_bytes() for f in files_a)
    other = synthesize(SyntheticSpec(pairs=3, dims=SMALL, seed=6))[0]
    assert not np.array_equal(other.frames, load_dataset(a).frames)


def test_synth_single_pair(tmp_path):
    ds = load_dataset(generate_synthetic(SyntheticSpec(pairs=1, dims=SMALL), tmp_path))
    assert len(ds) == 1 and len(ds.captions) == 1


# -- training ------------------------------------------------------------------------------

def test_batches_cover_each_video_once():
    ds = small_data(pairs=10, captions_per_video=3)
    batches = epoch_batches(ds, 4, np.random.default_rng(0))
    vids = np.concatenate([v for v, _ in batches])
    assert sorted(vids.tolist()) == list(range(10))
    assert [len(v) for v, _ in batches] == [4, 4, 2]
    for v, c in batches:
        assert all(ds.captions[ci].video == vi for vi, ci in zip(v, c))


def test_trailing_singleton_batch_dropped():
    batches = epoch_batches(small_data(pairs=5), 4, np.random.default_rng(0))
    assert [len(v) for v, _ in batches] == [4]


def test_zero_learning_rate_keeps_parameters():
    ds = small_data()
    cfg = small_cfg(learning_rate=0.0)
    from bicnet.model import BicNet
    from bicnet.numerics import using_kind
    with using_kind(cfg.scalar_kind):
        fresh = BicNet(ds.dims, cfg.model_config(), cfg.seed).state_dict()
    run = train(cfg, ds)
    assert run.steps == 4
    after = run.model.state_dict()
    assert all(np.array_equal(fresh[k], after[k]) for k in fresh)


def test_training_deterministic_and_loss_drops():
    ds = small_data(pairs=8)
    cfg = small_cfg(epochs=30, learning_rate=3e-3)
    a, b = train(cfg, ds), train(cfg, ds)
    assert a.losses == b.losses
    sa, sb = a.model.state_dict(), b.model.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert np.mean(a.losses[-4:]) < np.mean(a.losses[:4])


def test_batch_larger_than_dataset():
    with pytest.raises(UsageError):
        train(small_cfg(batch_size=8), small_data(pairs=6))


def test_nonfinite_abort_names_step():
    ds = small_data()
    ds.frames[...] = 3e38  # float32 overflow inside the fuse projection
    with pytest.raises(NonFiniteError, match="step 1"):
        train(small_cfg(), ds)


def test_early_stop_hook():
    run = train(small_cfg(epochs=10), small_data(), stop_after_epoch=lambda e, r: e == 2)
    assert run.steps == 6


# -- checkpoints ------------------------------------------------------------------------------

def test_checkpoint_round_trip_and_eval_equality(tmp_path):
    ds = small_data()
    cfg = small_cfg(variant=SRTVariant.SpatialSRT)
    run = train(cfg, ds)
    ck = Checkpoint.capture(cfg, run.model, run.adam)
    save_checkpoint(ck, tmp_path / "c.bin")
    back = load_checkpoint(tmp_path / "c.bin")
    assert back.config == cfg and back.dims == ds.dims and back.step == run.steps
    assert all(np.array_equal(ck.params[k], back.params[k]) and ck.params[k].dtype == back.params[k].dtype
               for k in ck.params)
    assert set(back.adam.first_moment) == set(run.adam.first_moment)
    assert all(np.array_equal(run.adam.second_moment[k], back.adam.second_moment[k]) for k in back.adam.second_moment)
    e1 = evaluate(run.model, ds, cfg.fusion())
    e2 = evaluate(back.build_model(), ds, cfg.fusion())
    assert np.array_equal(e1.scores, e2.scores) and e1.records() == e2.records()
    assert encode_checkpoint(back) == encode_checkpoint(ck)


def test_checkpoint_f64_round_trip(tmp_path):
    ds = small_data()
    cfg = small_cfg(scalar_kind=ScalarKind.Verification64, epochs=1)
    run = train(cfg, ds)
    back = decode_checkpoint(encode_checkpoint(Checkpoint.capture(cfg, run.model, run.adam)))
    assert all(v.dtype == np.float64 for v in back.params.values())


def test_checkpoint_rejects_corruption(tmp_path):
    run = train(small_cfg(epochs=1), small_data())
    buf = encode_checkpoint(Checkpoint.capture(small_cfg(epochs=1), run.model, run.adam))
    with pytest.raises(FormatError, match="magic"):
        decode_checkpoint(b"BICF" + buf[4:])
    with pytest.raises(FormatError, match="version"):
        decode_checkpoint(buf[:4] + struct.pack("<I", 2) + buf[8:])
    with pytest.raises(FormatError, match="truncated"):
        decode_checkpoint(buf[:-3])
    with pytest.raises(FormatError):
        decode_checkpoint(buf[:10])


# -- evaluation ---------------------------------------------------------------------------

def test_eval_single_pair_trivial():
    ds = small_data(pairs=1)
    cfg = small_cfg()
    from bicnet.model import BicNet
    ev = evaluate(BicNet(ds.dims, cfg.model_config()), ds, cfg.fusion())
    assert ev.t2v.r_at[1] == 1.0 and ev.t2v.med_r == 1 and ev.v2t.med_r == 1


def test_eval_empty_and_mismatch():
    from bicnet.model import BicNet
    cfg = small_cfg()
    model = BicNet(SMALL, cfg.model_config())
    with pytest.raises(UsageError):
        evaluate(model, small_data(pairs=0), cfg.fusion())
    other = synthesize(SyntheticSpec(pairs=2, dims=Dims(T=3, N=4, d_r=6, d_a=5, d_m3=3, d_t=9)))[0]
    with pytest.raises(ConfigurationError):
        evaluate(model, other, cfg.fusion())


def test_metric_record_keys():
    from bicnet.model import BicNet
    ds = small_data()
    ev = evaluate(BicNet(SMALL, small_cfg().model_config()), ds, FusionConfig())
    keys = [json.loads(line)["metric"] for line in ev.jsonl().splitlines()]
    assert keys == ["t2v.r1", "t2v.r5", "t2v.r10", "t2v.medr", "v2t.r1", "v2t.r5", "v2t.r10", "v2t.medr"]


def test_v2t_uses_first_caption():
    from bicnet.model import BicNet
    ds = small_data(pairs=4, captions_per_video=3)
    ev = evaluate(BicNet(SMALL, small_cfg().model_config()), ds, FusionConfig())
    assert ev.scores.shape == (12, 4)


# -- ablation, gradcheck, CLI --------------------------------------------------------------

@pytest.mark.parametrize("layers", [1, 2, 3])
def test_zero_probe_matches_closed_form(layers):
    ds = synthesize(SyntheticSpec(pairs=3))[0]
    for variant, measured, expected in zero_probe(TrainConfig(layers=layers), ds.regions):
        assert abs(measured - expected) < 1e-12, variant
    assert closed_form_factor(SRTVariant.FullSRT, layers) == (2 ** layers + 1) * 2 ** layers


def test_gradcheck_corrupt_group_detected():
    rep = run_gradcheck(GradcheckSpec(variants=(SRTVariant.FullSRT,), corrupt_group="relation.temporal.1"))
    assert [(v, g) for v, g, _ in rep.failures()] == [("FullSRT", "relation.temporal.1")]


def test_cli_round_trip(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--pairs", "5", "--T", "3", "--N", "4", "--d-r", "6", "--d-a", "5", "--d-m3", "3",
                 "--d-t", "7", "--out", str(data)]) == 0
    cfg = tmp_path / "c.cfg"
    small_cfg(epochs=1).save(cfg)
    ck = tmp_path / "ck.bin"
    assert main(["train", "--config", str(cfg), "--data", str(data / "manifest.json"), "--out", str(ck)]) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data / "manifest.json"), "--lambda", "1"]) == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert len(recs) == 8 and recs[3]["metric"] == "t2v.medr"
    out = tmp_path / "att"
    assert main(["dump-attention", "--checkpoint", str(ck), "--data", str(data / "manifest.json"),
                 "--item", "v0001", "--out", str(out)]) == 0
    spatial = read_blob(out / "relation.spatial.0.bicf")
    assert spatial.shape == (3, 2, 4, 4)  # frames x heads x proposals x proposals
    np.testing.assert_allclose(spatial.sum(-1), 1.0, atol=1e-5)
    assert read_blob(out / "relation.temporal.0.bicf").shape == (2, 3, 3)


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope"), "--data", str(tmp_path / "m.json")]) == 2
    assert "IngestError" in capsys.readouterr().err
    assert main(["gradcheck", "--variant", "NonSRT", "--max-entries", "2", "--corrupt-group", "text"]) == 1
    assert "group text" in capsys.readouterr().err


def test_ablation_header_shape():
    assert HEADER[0] == "Method" and len(HEADER) == 9
