from .tensor import Tensor, backward
from .functional import (
    BatchNormState,
    ConvSpec,
    activation,
    add,
    batchnorm,
    broadcast_concat_global,
    concat,
    conv1d,
    conv2d,
    elementwise_binary,
    global_maxpool,
    map_to_sequence,
    matmul,
    matmul_dense,
    maxpool,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    split,
    sub,
    sum_all,
    tanh,
)
from .gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor", "backward", "BatchNormState", "ConvSpec", "GradCheckReport",
    "activation", "add", "batchnorm", "broadcast_concat_global", "concat",
    "conv1d", "conv2d", "elementwise_binary", "global_maxpool", "grad_check",
    "map_to_sequence", "matmul", "matmul_dense", "maxpool", "mul", "relu",
    "reshape", "sigmoid", "softmax", "softmax_cross_entropy", "split", "sub",
    "sum_all", "tanh",
]
