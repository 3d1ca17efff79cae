"""Minimal reverse-mode autodiff engine used by the localization model."""

from .attention import multi_head_attention
from .gradcheck import finite_difference_error
from .ops import concat, conv1d, layer_norm, maximum, maxpool1d, minimum, softmax_lastdim
from .tensor import DEFAULT_DTYPE, Parameter, Tensor, no_grad, set_debug_checks

__all__ = [
    "DEFAULT_DTYPE",
    "Parameter",
    "Tensor",
    "concat",
    "conv1d",
    "finite_difference_error",
    "layer_norm",
    "maximum",
    "maxpool1d",
    "minimum",
    "multi_head_attention",
    "no_grad",
    "set_debug_checks",
    "softmax_lastdim",
]
