"""Minimal differentiable-computation layer for the POAM networks."""

from . import ops
from .gradcheck import finite_diff_check
from .layers import (
    GRU,
    MLP,
    Dense,
    LayerNorm,
    categorical_entropy,
    categorical_log_prob,
    sample_categorical,
    softmax_probs,
)
from .params import ParamStore, orthogonal
from .tensor import Tensor, no_grad

__all__ = [
    "ops",
    "Tensor",
    "no_grad",
    "ParamStore",
    "orthogonal",
    "Dense",
    "LayerNorm",
    "MLP",
    "GRU",
    "categorical_log_prob",
    "categorical_entropy",
    "softmax_probs",
    "sample_categorical",
    "finite_diff_check",
]
