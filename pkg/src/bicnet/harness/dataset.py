"""Dataset manifests and in-memory datasets.

The manifest is a UTF-8 JSON document::

    {"format": "bicnet-manifest", "version": 1,
     "dims": {"T": 4, "N": 5, "d_r": 40, "d_a": 32, "d_m3": 24, "d_t": 48},
     "split": "train",
     "items": [{"id": "v0000", "split": "train",
                "region_file": "regions/v0000.bicf",   # T x N x d_r
                "frame_file": "frames/v0000.bicf",     # T x (d_a + d_m3)
                "captions": [{"id": "v0000_c0",
                              "token_file": "tokens/v0000_c0.bicf"}]}]}  # S x d_t

Paths are relative to the manifest. An item's ``split`` defaults to the
manifest-level ``split``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IngestError
from ..model import Dims
from .blobs import read_blob, write_blob

MANIFEST_FORMAT = "bicnet-manifest"
MANIFEST_VERSION = 1


@dataclass
class Caption:
    id: str
    video: int  # index into Dataset.video_ids
    tokens: np.ndarray  # S x d_t


@dataclass
class Dataset:
    dims: Dims
    video_ids: list[str]
    regions: np.ndarray  # V x T x N x d_r
    frames: np.ndarray  # V x T x (d_a + d_m3)
    captions: list[Caption]
    splits: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.video_ids)

    def captions_by_video(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.video_ids]
        for i, cap in enumerate(self.captions):
            out[cap.video].append(i)
        return out

    def subset(self, split: str | None) -> "Dataset":
        if split is None:
            return self
        keep = [i for i, s in enumerate(self.splits) if s == split]
        remap = {old: new for new, old in enumerate(keep)}
        caps = [Caption(c.id, remap[c.video], c.tokens) for c in self.captions if c.video in remap]
        return Dataset(self.dims, [self.video_ids[i] for i in keep], self.regions[keep], self.frames[keep],
                       caps, [self.splits[i] for i in keep])


def _empty_arrays(dims: Dims):
    return (np.zeros((0, dims.T, dims.N, dims.d_r), np.float32),
            np.zeros((0, dims.T, dims.frame_dim), np.float32))


def load_dataset(manifest_path: str | Path, split: str | None = None) -> Dataset:
    """Read and validate every blob named by the manifest (eagerly)."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IngestError(f"missing manifest {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestError(f"{manifest_path}: not a valid manifest ({exc})") from exc
    if doc.get("format") != MANIFEST_FORMAT or doc.get("version") != MANIFEST_VERSION:
        raise IngestError(f"{manifest_path}: unsupported manifest format/version")
    try:
        dims = Dims(**{k: int(v) for k, v in doc["dims"].items()})
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"{manifest_path}: bad dims block ({exc})") from exc
    root = manifest_path.parent
    default_split = doc.get("split", "train")

    ids, splits, regions, frames, captions = [], [], [], [], []
    seen_captions: set[str] = set()
    for item in doc.get("items", []):
        vid = item["id"]
        if vid in ids:
            raise IngestError(f"{manifest_path}: duplicate video id {vid}")
        regions.append(read_blob(root / item["region_file"], (dims.T, dims.N, dims.d_r)))
        frames.append(read_blob(root / item["frame_file"], (dims.T, dims.frame_dim)))
        caps = item.get("captions", [])
        if not caps:
            raise IngestError(f"{manifest_path}: video {vid} has no captions")
        for cap in caps:
            if cap["id"] in seen_captions:
                raise IngestError(f"{manifest_path}: caption {cap['id']} maps to more than one video")
            seen_captions.add(cap["id"])
            captions.append(Caption(cap["id"], len(ids), read_blob(root / cap["token_file"], (None, dims.d_t))))
        ids.append(vid)
        splits.append(item.get("split", default_split))

    if ids:
        reg, frm = np.stack(regions), np.stack(frames)
    else:
        reg, frm = _empty_arrays(dims)
    return Dataset(dims, ids, reg, frm, captions, splits).subset(split)


def write_dataset(out_dir: str | Path, ds: Dataset, split: str = "train") -> Path:
    """Write blobs and a manifest; returns the manifest path."""
    out = Path(out_dir)
    for sub in ("regions", "frames", "tokens"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    by_video = ds.captions_by_video()
    items = []
    for v, vid in enumerate(ds.video_ids):
        write_blob(out / "regions" / f"{vid}.bicf", ds.regions[v])
        write_blob(out / "frames" / f"{vid}.bicf", ds.frames[v])
        caps = []
        for ci in by_video[v]:
            cap = ds.captions[ci]
            write_blob(out / "tokens" / f"{cap.id}.bicf", cap.tokens)
            caps.append({"id": cap.id, "token_file": f"tokens/{cap.id}.bicf"})
        entry = {"id": vid, "region_file": f"regions/{vid}.bicf", "frame_file": f"frames/{vid}.bicf",
                 "captions": caps}
        if ds.splits and ds.splits[v] != split:
            entry["split"] = ds.splits[v]
        items.append(entry)
    doc = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, "dims": ds.dims.to_dict(),
           "split": split, "items": items}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path
