"""Differentiable tensor core: tape, ops, parameter modules, gradient checks."""

from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    default_dtype,
    matmul,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    reshape,
    set_default_dtype,
    sub,
    transpose,
    using_dtype,
)
from .ops import (
    bce_loss,
    conv2d,
    gelu,
    layer_norm,
    linear,
    maxpool2d,
    mse_loss,
    pad_edge,
    pointwise,
    relu,
    rms_norm,
    sigmoid,
    softmax,
    transpose_conv2d,
    unfold_neighborhoods,
    window_stack,
)
from .module import Module, glorot_uniform, ones_param, zeros_param
from .gradcheck import check_gradients, normalized_max_error, numeric_gradient
from . import tensorfile

__all__ = [
    "Tensor",
    "add",
    "as_tensor",
    "bce_loss",
    "check_gradients",
    "concat",
    "conv2d",
    "default_dtype",
    "gelu",
    "glorot_uniform",
    "layer_norm",
    "linear",
    "matmul",
    "maxpool2d",
    "Module",
    "mse_loss",
    "mul",
    "neg",
    "normalized_max_error",
    "numeric_gradient",
    "ones_param",
    "pad_edge",
    "pointwise",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "rms_norm",
    "set_default_dtype",
    "sigmoid",
    "softmax",
    "sub",
    "tensorfile",
    "transpose",
    "transpose_conv2d",
    "unfold_neighborhoods",
    "using_dtype",
    "window_stack",
    "zeros_param",
]
