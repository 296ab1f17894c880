"""Process-wide scalar precision.

Training runs use 32-bit floats; gradient checks and verification tests use
64-bit. The kind is selected once at startup (``set_scalar_kind``); tests swap
it temporarily with ``using_kind``.
"""
from __future__ import annotations

import enum
from contextlib import contextmanager

import numpy as np


class ScalarKind(enum.Enum):
    Training32 = "float32"
    Verification64 = "float64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.value)

    @classmethod
    def parse(cls, text: str) -> "ScalarKind":
        for kind in cls:
            if text in (kind.name, kind.value):
                return kind
        raise ValueError(f"unknown scalar kind {text!r}; expected one of {[k.name for k in cls]}")


_current = ScalarKind.Training32


def scalar_kind() -> ScalarKind:
    return _current


def set_scalar_kind(kind: ScalarKind) -> None:
    global _current
    _current = kind


def default_dtype() -> np.dtype:
    return _current.dtype


@contextmanager
def using_kind(kind: ScalarKind):
    global _current
    prev = _current
    _current = kind
    try:
        yield kind
    finally:
        _current = prev
