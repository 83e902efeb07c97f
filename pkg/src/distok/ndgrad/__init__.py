"""Minimal dense tensors with reverse-mode autodiff, Adam, and checkpoints."""

from .tensor import (
    Tensor,
    adaptive_avg_pool_to_1,
    add,
    channel_norm,
    check_finite,
    concat,
    conv1d,
    conv_transpose1d,
    cosine_similarity,
    div,
    exp,
    getitem,
    l1_loss,
    l2_normalize,
    leaky_relu,
    linear,
    log,
    logsumexp,
    matmul,
    mean,
    mse_loss,
    mul,
    nearest_upsample,
    power,
    reshape,
    rfft_power,
    round_ste,
    softmax_cross_entropy,
    sqrt,
    straight_through,
    sub,
    take,
    tabs,
    tanh,
    transpose,
    tsum,
)
from .optim import Adam, AdamState, adam_step
from .init import near_orthogonal
from . import checkpoint

__all__ = [
    "Tensor", "Adam", "AdamState", "adam_step", "near_orthogonal", "checkpoint",
    "adaptive_avg_pool_to_1", "add", "channel_norm", "check_finite", "concat",
    "conv1d", "conv_transpose1d", "cosine_similarity", "div", "exp", "getitem",
    "l1_loss", "l2_normalize", "leaky_relu", "linear", "log", "logsumexp",
    "matmul", "mean", "mse_loss", "mul", "nearest_upsample", "power", "reshape", "rfft_power",
    "round_ste", "softmax_cross_entropy", "sqrt", "straight_through", "sub",
    "take", "tabs", "tanh", "transpose", "tsum",
]
