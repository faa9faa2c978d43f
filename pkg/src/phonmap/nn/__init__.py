"""Minimal dense-tensor layers with hand-written backward passes."""

from .gradcheck import grad_check, relative_error
from .layers import (
    INFER,
    TRAIN,
    RunningStats,
    batchnorm_time,
    batchnorm_time_backward,
    batchnorm_time_forward,
    conv1d_time,
    conv1d_time_backward,
    conv1d_time_forward,
    dropout,
    dropout_backward,
    dropout_forward,
    linear,
    linear_backward,
    linear_forward,
    log_softmax_rows,
    relu,
    relu_backward,
    relu_forward,
    softmax_rows,
    softmax_rows_backward,
)
from .optim import OptimizerState, adam_step

__all__ = [
    "INFER", "TRAIN", "RunningStats", "OptimizerState", "adam_step",
    "batchnorm_time", "batchnorm_time_backward", "batchnorm_time_forward", "conv1d_time",
    "conv1d_time_backward", "conv1d_time_forward", "dropout", "dropout_backward",
    "dropout_forward", "grad_check", "linear", "linear_backward", "linear_forward",
    "log_softmax_rows", "relative_error", "relu", "relu_backward", "relu_forward",
    "softmax_rows", "softmax_rows_backward",
]
