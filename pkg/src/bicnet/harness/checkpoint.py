"""Binary checkpoints.

Layout (little-endian): ``b"BICC"``, u32 version, u32 header length, a UTF-8
JSON header, then the raw record payloads back to back. The header carries
the config and dims snapshots, the Adam hyperparameters and step, and one
entry per record: ``[name, dtype, shape]``. Record names are parameter names
with ``adam.m/`` and ``adam.v/`` prefixes for the moments.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, IngestError
from ..model import BicNet, Dims
from ..numerics import AdamState, using_kind
from .config import TrainConfig

MAGIC = b"BICC"
VERSION = 1
_HEAD = struct.Struct("<4sII")
_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


@dataclass
class Checkpoint:
    config: TrainConfig
    dims: Dims
    params: dict[str, np.ndarray]
    adam: AdamState

    @property
    def step(self) -> int:
        return self.adam.step

    @classmethod
    def capture(cls, cfg: TrainConfig, model: BicNet, adam: AdamState) -> "Checkpoint":
        moments = AdamState(adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon, adam.step,
                            {k: v.copy() for k, v in adam.first_moment.items()},
                            {k: v.copy() for k, v in adam.second_moment.items()})
        return cls(cfg, model.dims, model.state_dict(), moments)

    def build_model(self) -> BicNet:
        with using_kind(self.config.scalar_kind):
            model = BicNet(self.dims, self.config.model_config(), self.config.seed)
        model.load_state_dict(self.params)
        return model


def _code(arr: np.ndarray) -> str:
    for code, dt in _DTYPES.items():
        if arr.dtype == dt:
            return code
    raise FormatError(f"unsupported record dtype {arr.dtype}")


def encode_checkpoint(ck: Checkpoint) -> bytes:
    records = list(ck.params.items())
    records += [(f"adam.m/{k}", v) for k, v in ck.adam.first_moment.items()]
    records += [(f"adam.v/{k}", v) for k, v in ck.adam.second_moment.items()]
    header = {
        "config": ck.config.to_dict(),
        "dims": ck.dims.to_dict(),
        "adam": {"learning_rate": ck.adam.learning_rate, "beta1": ck.adam.beta1, "beta2": ck.adam.beta2,
                 "epsilon": ck.adam.epsilon, "step": ck.adam.step},
        "records": [[name, _code(arr), list(arr.shape)] for name, arr in records],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype=_DTYPES[_code(arr)]).tobytes() for _, arr in records)
    return _HEAD.pack(MAGIC, VERSION, len(blob)) + blob + body


def decode_checkpoint(buf: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(buf) < _HEAD.size:
        raise FormatError(f"{source}: truncated checkpoint header")
    magic, version, hlen = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported checkpoint version {version}")
    start = _HEAD.size + hlen
    if len(buf) < start:
        raise FormatError(f"{source}: truncated checkpoint header")
    try:
        header = json.loads(buf[_HEAD.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: corrupt checkpoint header") from exc

    params, first, second = {}, {}, {}
    offset = start
    for name, code, shape in header["records"]:
        dt = _DTYPES[code]
        count = int(np.prod(shape))
        end = offset + count * dt.itemsize
        if end > len(buf):
            raise FormatError(f"{source}: truncated at record {name}")
        arr = np.frombuffer(buf, dtype=dt, count=count, offset=offset).reshape(shape).astype(dt.newbyteorder("="))
        offset = end
        if name.startswith("adam.m/"):
            first[name[7:]] = arr
        elif name.startswith("adam.v/"):
            second[name[7:]] = arr
        else:
            params[name] = arr
    if offset != len(buf):
        raise FormatError(f"{source}: {len(buf) - offset} trailing bytes")
    adam = AdamState(**header["adam"], first_moment=first, second_moment=second)
    return Checkpoint(TrainConfig.from_dict(header["config"]), Dims(**header["dims"]), params, adam)


def save_checkpoint(ck: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(encode_checkpoint(ck))


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"missing checkpoint {path}")
    return decode_checkpoint(path.read_bytes(), str(path))
