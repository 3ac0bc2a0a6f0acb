from .core import Tensor, get_default_dtype, grad_enabled, no_grad, precision
from .gradcheck import GradCheckReport, audit_layers, check_gradients, relative_error
from .layers import Conv, Dense, Dropout, Flatten, Layer, LayerParams, MaxPool, ReLU, Sequential
from .ops import (
    conv2d_forward,
    conv3d_forward,
    conv_forward,
    dense_forward,
    dropout,
    flatten,
    maxpool_forward,
    relu,
    reshape,
    softmax,
    softmax_crossentropy,
)
from .optim import C3D_SCHEDULE, LENET_SCHEDULE, LRSchedule, sgd_update

__all__ = [
    "Tensor", "get_default_dtype", "grad_enabled", "no_grad", "precision",
    "GradCheckReport", "audit_layers", "check_gradients", "relative_error",
    "Conv", "Dense", "Dropout", "Flatten", "Layer", "LayerParams", "MaxPool", "ReLU", "Sequential",
    "conv2d_forward", "conv3d_forward", "conv_forward", "dense_forward", "dropout", "flatten",
    "maxpool_forward", "relu", "reshape", "softmax", "softmax_crossentropy",
    "C3D_SCHEDULE", "LENET_SCHEDULE", "LRSchedule", "sgd_update",
]
