"""GCN and GAT forward passes built on the autodiff tape."""

from __future__ import annotations

import numpy as np

from ..graphs import SparseAdjacency
from .tensor import (ShapeError, Tensor, add, concat, dropout, gather,
                     leaky_relu, matmul, mul, parameter, relu, scale,
                     segment_softmax, segment_sum, spmm)

LEAKY_RELU_SLOPE = 0.2


class ModelParams:
    """Named trainable tensors in a stable insertion order."""

    def __init__(self, tensors: dict[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = dict(tensors or {})

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        if not tensor.requires_grad:
            raise ValueError(f"parameter {name!r} must require gradients")
        self._tensors[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: np.array(t.value, copy=True)
                for name, t in self._tensors.items()}

    def load_snapshot(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            stored = np.asarray(snapshot[name], dtype=t.value.dtype)
            if stored.shape != t.value.shape:
                raise ShapeError(
                    f"snapshot shape {stored.shape} != parameter "
                    f"{name!r} shape {t.value.shape}")
            t.value = np.array(stored, copy=True)

    def validate_finite(self) -> None:
        for name, t in self._tensors.items():
            if not np.all(np.isfinite(t.value)):
                raise ValueError(f"parameter {name!r} has non-finite entries")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
           shape: tuple | None = None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def _layer_dims(in_dim: int, hidden_dim: int, out_dim: int,
                layers: int) -> list[tuple[int, int]]:
    dims = [in_dim] + [hidden_dim] * (layers - 1) + [out_dim]
    return list(zip(dims[:-1], dims[1:]))


def init_params(architecture: str, in_dim: int, out_dim: int, layers: int,
                hidden_dim: int, heads: int,
                rng: np.random.Generator) -> ModelParams:
    """Glorot-initialized weights; zero biases."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if out_dim < 1:
        raise ValueError("graph carries no labeled classes")
    params = ModelParams()
    if architecture == "gcn":
        for l, (d_in, d_out) in enumerate(
                _layer_dims(in_dim, hidden_dim, out_dim, layers)):
            params.add(f"gcn{l}.weight", parameter(glorot(rng, d_in, d_out)))
            params.add(f"gcn{l}.bias", parameter(np.zeros((1, d_out))))
        return params
    if architecture == "gat":
        if layers > 1 and hidden_dim % heads:
            raise ValueError(
                f"hidden_dim {hidden_dim} not divisible by heads {heads}")
        d_head = hidden_dim // heads if layers > 1 else out_dim
        layer_in = in_dim
        for l in range(layers):
            last = l == layers - 1
            d_out = out_dim if last else d_head
            for h in range(heads):
                params.add(f"gat{l}.h{h}.weight",
                           parameter(glorot(rng, layer_in, d_out)))
                params.add(f"gat{l}.h{h}.att_src",
                           parameter(glorot(rng, d_out, 1, (d_out, 1))))
                params.add(f"gat{l}.h{h}.att_dst",
                           parameter(glorot(rng, d_out, 1, (d_out, 1))))
            width = d_out if last else d_out * heads
            params.add(f"gat{l}.bias", parameter(np.zeros((1, width))))
            layer_in = d_out * heads
        return params
    raise ValueError(f"unknown architecture {architecture!r}")


def gcn_forward(adj: SparseAdjacency, features: Tensor, params: ModelParams,
                layers: int, dropout_rate: float = 0.0,
                dropout_active: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
    """Stacked D^{-1/2}(A+I)D^{-1/2} X W layers, ReLU between them.

    Dropout (when active) hits the input of every layer. The adjacency is
    expected pre-normalized (see graphs.normalized_adjacency).
    """
    x = features
    for l in range(layers):
        if dropout_active and dropout_rate > 0:
            x = dropout(x, dropout_rate, rng)
        x = add(spmm(adj, matmul(x, params[f"gcn{l}.weight"])),
                params[f"gcn{l}.bias"])
        if l != layers - 1:
            x = relu(x)
    return x


def gat_forward(edges: np.ndarray, num_nodes: int, features: Tensor,
                params: ModelParams, layers: int, heads: int,
                dropout_rate: float = 0.0, dropout_active: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
    """Multi-head attention layers over a symmetrized self-looped edge list.

    Per edge (u -> v): score = leaky_relu(a_src . Wh_u + a_dst . Wh_v),
    normalized by softmax over v's incoming edges. Hidden layers concatenate
    heads; the output layer averages them.
    """
    edges = np.asarray(edges, dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ShapeError(f"edge list must be (E, 2), got {edges.shape}")
    src, dst = edges[:, 0], edges[:, 1]
    x = features
    for l in range(layers):
        last = l == layers - 1
        if dropout_active and dropout_rate > 0:
            x = dropout(x, dropout_rate, rng)
        head_outs = []
        for h in range(heads):
            wh = matmul(x, params[f"gat{l}.h{h}.weight"])
            s_src = matmul(wh, params[f"gat{l}.h{h}.att_src"])
            s_dst = matmul(wh, params[f"gat{l}.h{h}.att_dst"])
            score = leaky_relu(add(gather(s_src, src), gather(s_dst, dst)),
                               LEAKY_RELU_SLOPE)
            att = segment_softmax(score, dst, num_nodes)
            msg = mul(att, gather(wh, src))
            head_outs.append(segment_sum(msg, dst, num_nodes))
        if last:
            agg = head_outs[0]
            for extra in head_outs[1:]:
                agg = add(agg, extra)
            x = add(scale(agg, 1.0 / heads), params[f"gat{l}.bias"])
        else:
            x = relu(add(concat(head_outs, axis=1), params[f"gat{l}.bias"]))
    return x
