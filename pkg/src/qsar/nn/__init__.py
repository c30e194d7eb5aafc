from .tensor import (
    Tensor, add, affine, as_tensor, collect_grads, concat, dropout, gelu, grad_leaves,
    index, inject_sign_flip, layer_norm, linear, matmul, mean, mul, no_grad_leaves,
    reshape, softmax, softmax_cross_entropy, sum_, transpose,
)
from .registry import CLASSICAL, QUANTUM, Param, ParamRegistry, load_checkpoint, save_checkpoint
from .optim import Adam, TrainConfig, adam_step, cosine_lr
from .layers import mlp_head, transformer_block
from .quantum import quantum_layer

__all__ = [
    "Tensor", "add", "affine", "as_tensor", "collect_grads", "concat", "dropout", "gelu",
    "grad_leaves", "index", "inject_sign_flip", "layer_norm", "linear", "matmul", "mean",
    "mul", "no_grad_leaves", "reshape", "softmax", "softmax_cross_entropy", "sum_",
    "transpose", "CLASSICAL", "QUANTUM", "Param", "ParamRegistry", "load_checkpoint",
    "save_checkpoint", "Adam", "TrainConfig", "adam_step", "cosine_lr", "mlp_head",
    "transformer_block", "quantum_layer",
]
