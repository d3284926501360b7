"""Minimal reverse-mode autodiff and the primitives the model needs."""

from . import kernels
from .gradcheck import analytic_gradients, grad_check
from .params import ParameterStore
from .tensor import (
    ShapeError,
    Tape,
    Tensor,
    add,
    add_bias,
    additive_energy,
    affine,
    backward,
    columns,
    concat,
    copy_mix,
    coverage_attention,
    coverage_penalty,
    embedding_gather,
    gru_cell,
    gru_sequence,
    linear,
    log,
    matmul,
    minimum,
    mul,
    nll_at,
    one_minus,
    pad_columns,
    pick,
    scale,
    scale_rows,
    scatter_add,
    sigmoid,
    sigmoid_gate,
    softmax,
    softmax_array,
    stack_rows,
    sub,
    take_rows,
    tanh,
    total,
)

__all__ = [
    "ParameterStore",
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "add_bias",
    "additive_energy",
    "affine",
    "analytic_gradients",
    "backward",
    "columns",
    "concat",
    "copy_mix",
    "coverage_attention",
    "coverage_penalty",
    "embedding_gather",
    "grad_check",
    "gru_cell",
    "gru_sequence",
    "kernels",
    "linear",
    "log",
    "matmul",
    "minimum",
    "mul",
    "nll_at",
    "one_minus",
    "pad_columns",
    "pick",
    "scale",
    "scale_rows",
    "scatter_add",
    "sigmoid",
    "sigmoid_gate",
    "softmax",
    "softmax_array",
    "stack_rows",
    "sub",
    "take_rows",
    "tanh",
    "total",
]
