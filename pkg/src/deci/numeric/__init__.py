from deci.numeric.gradcheck import grad_check
from deci.numeric.kernels import (
    affine,
    conv1d_front_padded,
    dropout,
    gelu,
    layer_norm,
    sigmoid,
    softmax,
    softmax_cross_entropy,
)
from deci.numeric.tape import GradTape, Var

__all__ = [
    "GradTape",
    "Var",
    "affine",
    "conv1d_front_padded",
    "dropout",
    "gelu",
    "grad_check",
    "layer_norm",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy",
]
