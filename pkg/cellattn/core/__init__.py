"""Tensor engine: reverse-mode autodiff, layer primitives and checkpoints."""

from .init import fan_in_out, glorot_uniform, ones, zeros
from .losses import BCE_EPSILON, bce_loss, one_hot
from .ops import (
    RunningStats,
    add,
    avg_pool2d,
    batchnorm,
    concat,
    conv2d,
    dense,
    dropout,
    flatten,
    matmul,
    max_pool2d,
    mean_all,
    mul,
    relu,
    reshape,
    scale,
    slice_axis,
    softmax,
    sum_all,
    transpose,
)
from .optim import sgd_step
from .registry import ParameterSet, Registration, Registry
from .serialization import (
    decode_tensor,
    encode_tensor,
    load_checkpoint,
    load_tensor,
    save_checkpoint,
    save_tensor,
)
from .tensor import GraphNode, OpKind, Tensor, backward, grad


__all__ = [
    "BCE_EPSILON",
    "GraphNode",
    "OpKind",
    "ParameterSet",
    "Registration",
    "Registry",
    "RunningStats",
    "Tensor",
    "add",
    "avg_pool2d",
    "backward",
    "batchnorm",
    "bce_loss",
    "concat",
    "conv2d",
    "decode_tensor",
    "dense",
    "dropout",
    "encode_tensor",
    "fan_in_out",
    "flatten",
    "glorot_uniform",
    "grad",
    "load_checkpoint",
    "load_tensor",
    "matmul",
    "max_pool2d",
    "mean_all",
    "mul",
    "one_hot",
    "ones",
    "relu",
    "reshape",
    "save_checkpoint",
    "save_tensor",
    "scale",
    "sgd_step",
    "slice_axis",
    "softmax",
    "sum_all",
    "transpose",
    "zeros",
]
