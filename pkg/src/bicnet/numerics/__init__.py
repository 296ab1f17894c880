from .adam import AdamState, adam_step
from .functional import LN_EPS, cosine, cosine_matrix, gelu, l2_normalize, layer_norm, linear, softmax
from .kinds import ScalarKind, default_dtype, scalar_kind, set_scalar_kind, using_kind
from .params import Initializer, Module, Parameter
from .tensor import (
    Tensor,
    amax,
    as_tensor,
    backward,
    concat,
    grad_enabled,
    matmul,
    mean,
    no_grad,
    relu,
    stack,
    take,
    tsum,
)

__all__ = [
    "AdamState", "adam_step", "LN_EPS", "cosine", "cosine_matrix", "gelu", "l2_normalize",
    "layer_norm", "linear", "softmax", "ScalarKind", "default_dtype", "scalar_kind",
    "set_scalar_kind", "using_kind", "Initializer", "Module", "Parameter", "Tensor", "amax",
    "as_tensor", "backward", "concat", "grad_enabled", "matmul", "mean", "no_grad", "relu",
    "stack", "take", "tsum",
]
