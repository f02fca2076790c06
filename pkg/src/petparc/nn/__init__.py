from .autograd import Tensor, cross_entropy, dropout, no_grad
from .model import (
    EncoderConfig,
    attention,
    classify,
    encoder_forward,
    forward,
    init_params,
    param_shapes,
)
from .optim import OptimizerState, adam_step, cosine_lr

__all__ = [
    "EncoderConfig",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "attention",
    "classify",
    "cosine_lr",
    "cross_entropy",
    "dropout",
    "encoder_forward",
    "forward",
    "init_params",
    "no_grad",
    "param_shapes",
]
