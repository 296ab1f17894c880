"""Training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ConfigurationError
from ..model import ModelConfig
from ..numerics import ScalarKind
from ..relation import SRTVariant
from ..retrieval import FusionConfig, LossConfig


@dataclass
class TrainConfig:
    lam: float = 0.5
    margin: float = 0.2
    layers: int = 2
    heads: int = 4
    dim: int = 64  # joint embedding size d_*
    d_g: int = 64  # global branch width; must equal dim
    mlp_hidden: int = 0  # 0 -> 4 * dim
    learning_rate: float = 2e-4
    batch_size: int = 8
    epochs: int = 500
    seed: int = 0
    variant: SRTVariant = SRTVariant.FullSRT
    frame_positional: bool = True
    proposal_positional: bool = False
    hardest_negative: bool = False
    scalar_kind: ScalarKind = ScalarKind.Training32

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.margin <= 1.0:
            raise ConfigurationError(f"margin must lie in (0, 1], got {self.margin}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2 to have a negative, got {self.batch_size}")
        if self.d_g != self.dim:
            raise ConfigurationError(f"d_g ({self.d_g}) must equal the joint dim ({self.dim})")
        for key in ("layers", "heads", "dim", "epochs"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be >= 1, got {getattr(self, key)}")
        if self.dim % self.heads:
            raise ConfigurationError(f"heads={self.heads} does not divide dim={self.dim}")
        if self.learning_rate < 0 or self.mlp_hidden < 0:
            raise ConfigurationError("learning_rate and mlp_hidden must be non-negative")

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.dim, self.layers, self.heads, self.mlp_hidden or None, self.variant,
                           self.frame_positional, self.proposal_positional)

    def fusion(self) -> FusionConfig:
        return FusionConfig(self.lam)

    def loss(self) -> LossConfig:
        return LossConfig(self.margin, self.hardest_negative)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    # -- serialization ---------------------------------------------------------
    def to_dict(self) -> dict[str, object]:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = val.name if isinstance(val, ScalarKind) else val.value if isinstance(val, SRTVariant) else val
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, object]) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: _coerce(k, known[k].type, v) for k, v in raw.items()})

    def dumps(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            lines.append(f"{key} = {str(val).lower() if isinstance(val, bool) else val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrainConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
            key = key.strip()
            if key in raw:
                raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = val.strip()
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _coerce(key: str, typ, val):
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if typ == "bool":
            if isinstance(val, bool):
                return val
            text = str(val).strip().lower()
            if text not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return text in ("true", "1", "yes")
        if typ == "int":
            if isinstance(val, float) and not val.is_integer():
                raise ValueError(val)
            return int(val)
        if typ == "float":
            return float(val)
        if typ == "SRTVariant":
            return val if isinstance(val, SRTVariant) else SRTVariant.parse(str(val))
        if typ == "ScalarKind":
            return val if isinstance(val, ScalarKind) else ScalarKind.parse(str(val))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"config key {key!r}: cannot parse {val!r} as {typ}") from exc
    raise ConfigurationError(f"config key {key!r}: unsupported type {typ}")
