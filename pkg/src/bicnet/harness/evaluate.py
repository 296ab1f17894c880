"""Full-split retrieval evaluation and metric records."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, UsageError
from ..model import BicNet
from ..numerics import ScalarKind, Tensor, concat, no_grad, using_kind
from ..retrieval import FusionConfig, RetrievalMetrics, ScoreMatrix, retrieval_metrics, similarity_matrix
from .dataset import Dataset

CHUNK = 64


@dataclass
class Embeddings:
    f_r: Tensor  # V x d
    f_v: Tensor  # V x d
    f_t: Tensor  # Q x d


@dataclass
class Evaluation:
    t2v: RetrievalMetrics
    v2t: RetrievalMetrics
    scores: np.ndarray  # captions x videos

    def records(self) -> list[dict[str, object]]:
        out = []
        for direction, m in (("t2v", self.t2v), ("v2t", self.v2t)):
            for k in sorted(m.r_at):
                out.append({"metric": f"{direction}.r{k}", "value": m.r_at[k]})
            out.append({"metric": f"{direction}.medr", "value": m.med_r})
        return out

    def jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())


def check_dims(model: BicNet, ds: Dataset) -> None:
    if model.dims != ds.dims:
        raise ConfigurationError(f"model dims {model.dims.to_dict()} do not match dataset dims {ds.dims.to_dict()}")


def embed_dataset(model: BicNet, ds: Dataset) -> Embeddings:
    check_dims(model, ds)
    f_r, f_v, f_t = [], [], []
    with no_grad(), using_kind(model_kind(model)):
        for s in range(0, len(ds), CHUNK):
            r, v = model.embed_videos(ds.regions[s:s + CHUNK], ds.frames[s:s + CHUNK])
            f_r.append(r)
            f_v.append(v)
        caps = [c.tokens for c in ds.captions]
        for s in range(0, len(caps), CHUNK):
            f_t.append(model.embed_texts(caps[s:s + CHUNK]))
    return Embeddings(concat(f_r, 0), concat(f_v, 0), concat(f_t, 0))


def model_kind(model: BicNet) -> ScalarKind:
    return ScalarKind.Verification64 if model.parameters()[0].dtype == np.float64 else ScalarKind.Training32


def evaluate(model: BicNet, ds: Dataset, fusion: FusionConfig) -> Evaluation:
    """Text-to-video over every caption; video-to-text against each video's first caption."""
    if len(ds) == 0:
        raise UsageError("cannot evaluate an empty dataset")
    with using_kind(model_kind(model)):
        emb = embed_dataset(model, ds)
        with no_grad():
            scores = similarity_matrix(emb.f_r, emb.f_v, emb.f_t, fusion).data
    truth = np.array([c.video for c in ds.captions])
    first = np.array([caps[0] for caps in ds.captions_by_video()])
    t2v = retrieval_metrics(ScoreMatrix(scores, truth))
    v2t = retrieval_metrics(ScoreMatrix(scores[first].T, np.arange(len(ds))))
    return Evaluation(t2v, v2t, scores)
