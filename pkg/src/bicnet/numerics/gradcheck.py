"""Central finite differences against the reverse-mode record."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward

DEFAULT_STEP = 1e-5
# denominator floor: central differences at step 1e-5 carry ~1e-10 of
# roundoff, which must not be divided by a true gradient of ~0
REL_FLOOR = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f: Callable[[], Tensor], x: Tensor, step: float = DEFAULT_STEP,
                 entries: Sequence[int] | None = None) -> np.ndarray:
    """d f / d x by central differences at the flat ``entries`` (all if None).

    ``x.data`` is perturbed in place and restored exactly.
    """
    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    idx = range(flat.size) if entries is None else entries
    out = np.zeros(len(idx), dtype=np.float64)
    for k, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + step
        up = f().item()
        flat[i] = orig - step
        down = f().item()
        flat[i] = orig
        out[k] = (up - down) / (2.0 * step)
    return out


def analytic_grads(f: Callable[[], Tensor], xs: Sequence[Tensor]) -> list[np.ndarray]:
    for x in xs:
        x.grad = np.zeros_like(x.data)
    backward(f())
    return [x.grad.copy() for x in xs]


def check_gradients(f: Callable[[], Tensor], xs: Sequence[Tensor], step: float = DEFAULT_STEP,
                    max_entries: int | None = None, rng: np.random.Generator | None = None,
                    names: Sequence[str] | None = None) -> dict[str, float]:
    """Max relative error per input tensor.

    With ``max_entries`` set, each tensor larger than that is probed at a
    random subset of coordinates.
    """
    rng = rng or np.random.default_rng(0)
    grads = analytic_grads(f, xs)
    report = {}
    for k, (x, g) in enumerate(zip(xs, grads)):
        n = x.size
        if max_entries is None or n <= max_entries:
            entries = list(range(n))
        else:
            entries = sorted(rng.choice(n, size=max_entries, replace=False).tolist())
        num = numeric_grad(f, x, step, entries)
        ana = g.reshape(-1)[entries]
        name = names[k] if names else getattr(x, "name", "") or f"input{k}"
        report[name] = float(relative_error(ana, num).max())
    return report
