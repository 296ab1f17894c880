"""Named parameters, a minimal module container, and initializers."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from ..errors import DimensionError, UsageError
from .kinds import default_dtype
from .tensor import Tensor


class Parameter(Tensor):
    """A leaf tensor that always carries a gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.zero_grad()

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


class Module:
    """Walks attributes to find parameters; names are dotted attribute paths."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        seen = set()
        for name, p in self.named_parameters(prefix):
            if name in seen:
                raise UsageError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise UsageError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: expected shape {p.shape}, found {arr.shape}")
            p.data = arr.astype(p.dtype, copy=True)
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Initializer:
    """Seeded draws in float64, rounded once to the active scalar kind.

    Rounding from a shared float64 draw keeps 32- and 64-bit models built from
    the same seed as close as the precision allows.
    """

    def __init__(self, seed: int | np.random.Generator):
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def xavier(self, shape, fan_in: int | None = None, fan_out: int | None = None) -> Parameter:
        shape = tuple(shape)
        fan_in = shape[-2] if fan_in is None else fan_in
        fan_out = shape[-1] if fan_out is None else fan_out
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return Parameter(self.rng.uniform(-bound, bound, size=shape).astype(default_dtype()))

    def normal(self, shape, std: float) -> Parameter:
        return Parameter((self.rng.standard_normal(tuple(shape)) * std).astype(default_dtype()))

    def zeros(self, shape) -> Parameter:
        return Parameter(np.zeros(tuple(shape), dtype=default_dtype()))

    def ones(self, shape) -> Parameter:
        return Parameter(np.ones(tuple(shape), dtype=default_dtype()))
