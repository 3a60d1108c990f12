"""
Tensor Module

Dense float64 tensors with reverse-mode automatic differentiation.
Numeric substrate for every model equation.
"""

from .engine import (
    PRIMITIVES,
    GradientMap,
    Tape,
    TapeEntry,
    Tensor,
    add,
    backward,
    concat,
    embedding_lookup,
    expand,
    gather_rows,
    log_softmax_rows,
    matmul,
    mul,
    primitive_forward,
    reshape,
    scale,
    sigmoid,
    slice_,
    softmax_rows,
    sub,
    sum_,
    tanh,
)
from .gradcheck import check_gradients

__all__ = [
    "PRIMITIVES",
    "GradientMap",
    "Tape",
    "TapeEntry",
    "Tensor",
    "add",
    "backward",
    "check_gradients",
    "concat",
    "embedding_lookup",
    "expand",
    "gather_rows",
    "log_softmax_rows",
    "matmul",
    "mul",
    "primitive_forward",
    "reshape",
    "scale",
    "sigmoid",
    "slice_",
    "softmax_rows",
    "sub",
    "sum_",
    "tanh",
]
