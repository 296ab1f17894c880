"""Synthetic paired video/caption features.

Each pair owns a latent ``z``. Every region slot, frame slot and token slot
has its own fixed random matrix, and the feature in that slot is the matrix
applied to ``z`` plus Gaussian noise. Matched pairs are therefore linearly
aligned and mismatched pairs are independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..model import Dims
from .dataset import Caption, Dataset, write_dataset


@dataclass(frozen=True)
class SyntheticSpec:
    pairs: int = 32
    latent_dim: int = 16
    noise_scale: float = 0.1
    dims: Dims = field(default_factory=Dims)
    seed: int = 0
    min_tokens: int = 4
    max_tokens: int = 8
    captions_per_video: int = 1

    def __post_init__(self):
        if self.pairs < 0 or self.latent_dim < 1 or self.noise_scale < 0:
            raise ConfigurationError("pairs >= 0, latent_dim >= 1 and noise_scale >= 0 are required")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ConfigurationError("need 1 <= min_tokens <= max_tokens")
        if self.captions_per_video < 1:
            raise ConfigurationError("captions_per_video must be >= 1")


@dataclass
class LatentMaps:
    regions: np.ndarray  # T x N x d_r x k
    frames: np.ndarray  # T x D x k
    tokens: np.ndarray  # max_tokens x d_t x k


def latent_maps(spec: SyntheticSpec, rng: np.random.Generator) -> LatentMaps:
    d, k = spec.dims, spec.latent_dim
    scale = 1.0 / np.sqrt(k)
    return LatentMaps(rng.standard_normal((d.T, d.N, d.d_r, k)) * scale,
                      rng.standard_normal((d.T, d.frame_dim, k)) * scale,
                      rng.standard_normal((spec.max_tokens, d.d_t, k)) * scale)


def synthesize(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """In-memory dataset plus the ``pairs x latent_dim`` latents behind it."""
    rng = np.random.default_rng(spec.seed)
    maps = latent_maps(spec, rng)
    d, p, s = spec.dims, spec.pairs, spec.noise_scale
    z = rng.standard_normal((p, spec.latent_dim))

    regions = np.einsum("tnrk,pk->ptnr", maps.regions, z) + s * rng.standard_normal((p, d.T, d.N, d.d_r))
    frames = np.einsum("tfk,pk->ptf", maps.frames, z) + s * rng.standard_normal((p, d.T, d.frame_dim))
    captions = []
    for v in range(p):
        for c in range(spec.captions_per_video):
            n = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
            tok = maps.tokens[:n] @ z[v] + s * rng.standard_normal((n, d.d_t))
            captions.append(Caption(f"v{v:04d}_c{c}", v, tok.astype(np.float32)))
    ids = [f"v{v:04d}" for v in range(p)]
    ds = Dataset(d, ids, regions.astype(np.float32), frames.astype(np.float32), captions, ["train"] * p)
    return ds, z


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    ds, _ = synthesize(spec)
    return write_dataset(out_dir, ds)
