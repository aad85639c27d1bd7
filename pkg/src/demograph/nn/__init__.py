"""Numerical core: autodiff tensors, GNN layers, Adam, training loop."""

from .tensor import (BackwardStateError, NumericError, ShapeError, Tensor,
                     concat, constant, dropout, gather, leaky_relu, matmul,
                     parameter, relu, scale, segment_softmax, segment_sum,
                     softmax_cross_entropy, softmax_rows, spmm,
                     tensor_sum)
from .layers import (ModelParams, gat_forward, gcn_forward, glorot,
                     init_params)
from .optim import AdamState, adam_step
from .train import (DivergenceError, EpochMetrics, TrainConfig, TrainResult,
                    load_checkpoint, save_checkpoint, temperature, train)

__all__ = [
    "BackwardStateError", "NumericError", "ShapeError", "Tensor", "concat",
    "constant", "dropout", "gather", "leaky_relu", "matmul", "parameter",
    "relu", "scale", "segment_softmax", "segment_sum",
    "softmax_cross_entropy", "softmax_rows", "spmm", "tensor_sum",
    "ModelParams", "gat_forward", "gcn_forward", "glorot", "init_params",
    "AdamState", "adam_step",
    "DivergenceError", "EpochMetrics", "TrainConfig", "TrainResult",
    "load_checkpoint", "save_checkpoint", "temperature", "train",
]
