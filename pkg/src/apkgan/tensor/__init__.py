from .core import (Tensor, add, as_tensor, backward, broadcast_to, div, enable_grad,
                   fold, grad, grad_with_tape, is_grad_enabled, l2_norm, leaky_relu,
                   matmul, mean, mul, neg, no_grad, parameters_grad, reshape, sigmoid,
                   softplus, sqrt, square, sub, sum_, sum_to, swapaxes, tanh, transpose,
                   unfold)
from .io import load_params, save_params, dumps_params, loads_params
from .nn import (ParamSet, ParamSpec, conv2d, conv_transpose2d, init_params, linear,
                 max_pool2d, param_rng)
from .optim import AdamState, adam_step

__all__ = [
    "Tensor", "add", "as_tensor", "backward", "broadcast_to", "div", "enable_grad", "fold",
    "grad", "grad_with_tape", "is_grad_enabled", "l2_norm", "leaky_relu", "matmul", "mean",
    "mul", "neg", "no_grad", "parameters_grad", "reshape", "sigmoid", "softplus", "sqrt",
    "square", "sub", "sum_", "sum_to", "swapaxes", "tanh", "transpose", "unfold",
    "load_params", "save_params", "dumps_params", "loads_params",
    "ParamSet", "ParamSpec", "conv2d", "conv_transpose2d", "init_params", "linear",
    "max_pool2d", "param_rng", "AdamState", "adam_step",
]
