"""Numerical kernel: tensors, reverse-mode differentiation, layers, Adam,
checkpoint IO, and gradient checking."""

from .tensor import (
    GradTape,
    _record as tensor_record,
    RoutingTrace,
    suspend_tape,
    Tensor,
    add,
    assert_finite,
    causal_softmax,
    concat_last,
    conv2d,
    conv2d_cm,
    cross_entropy,
    embedding,
    flatten,
    layer_norm,
    linear,
    matmul,
    max_pool_2x2,
    mul,
    narrow,
    narrow_axis,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    stack,
    sum_all,
    tanh,
    tensor,
)
from .attention import masked_multi_head_attention
from .params import Initializer, ParameterStore
from .optim import Adam
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, finite_difference_gradient, relative_error

__all__ = [
    "Adam",
    "tensor_record",
    "CheckpointError",
    "GradTape",
    "RoutingTrace",
    "suspend_tape",
    "Initializer",
    "ParameterStore",
    "Tensor",
    "add",
    "assert_finite",
    "causal_softmax",
    "check_gradients",
    "concat_last",
    "conv2d",
    "conv2d_cm",
    "cross_entropy",
    "embedding",
    "finite_difference_gradient",
    "flatten",
    "layer_norm",
    "linear",
    "load_checkpoint",
    "masked_multi_head_attention",
    "matmul",
    "max_pool_2x2",
    "mul",
    "narrow",
    "narrow_axis",
    "relative_error",
    "relu",
    "reshape",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "softmax",
    "stack",
    "sum_all",
    "tanh",
    "tensor",
]
