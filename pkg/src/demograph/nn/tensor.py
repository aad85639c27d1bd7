"""Reverse-mode autodiff tape over the op set the GNN layers need."""

from __future__ import annotations

import numpy as np

from ..graphs import SparseAdjacency

_DEFAULT_DTYPE = np.float64


class NumericError(FloatingPointError):
    """An op produced NaN or infinity."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class BackwardStateError(RuntimeError):
    """backward() called on an already-freed tape."""


def set_default_dtype(dtype) -> None:
    """float64 for tests and gradient checks; float32 for benchmark speed."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by {op}")


class Tensor:
    """Array node on the tape.

    `_vjp(grad_out)` returns one gradient per parent, aligned positionally.
    Leaves (parameters, constants) have no parents.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp",
                 "_backward_done")

    def __init__(self, value, requires_grad: bool = False, _parents=(),
                 _vjp=None, _op: str = "tensor"):
        self.value = np.asarray(value, dtype=_DEFAULT_DTYPE)
        _check_finite(self.value, _op)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents)
        self._parents = tuple(_parents)
        self._vjp = _vjp
        self._backward_done = False

    @property
    def shape(self):
        return self.value.shape

    def detach(self) -> np.ndarray:
        return np.array(self.value, copy=True)

    def backward(self) -> None:
        """Accumulate gradients into every requires-grad leaf, then free
        the recorded graph. A second call raises BackwardStateError."""
        if self._backward_done:
            raise BackwardStateError(
                "backward() already ran on this tape; re-run the forward "
                "pass to build a new one")
        if self.value.size != 1:
            raise ShapeError(
                f"backward() needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, copy=True)
                else:
                    parent.grad = parent.grad + g
        for node in order:
            if node is not self:
                node._vjp = None
                node._parents = ()
        self._backward_done = True

    # Convenience operators for tests and layer code.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def parameter(value) -> Tensor:
    # Copy so optimizer updates never alias caller-owned arrays.
    return Tensor(np.array(value, dtype=_DEFAULT_DTYPE, copy=True),
                  requires_grad=True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} x {b.shape}")
    out_value = a.value @ b.value
    _check_finite(out_value, "matmul")
    av, bv = a.value, b.value

    def vjp(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    return Tensor(out_value, _parents=(a, b), _vjp=vjp, _op="matmul")


def spmm(adj: SparseAdjacency, x: Tensor) -> Tensor:
    """Sparse @ dense with a constant adjacency."""
    if x.value.ndim != 2 or adj.n != x.shape[0]:
        raise ShapeError(f"spmm shapes ({adj.n}x{adj.n}) x {x.shape}")
    out_value = adj.csr() @ x.value
    _check_finite(out_value, "spmm")

    def vjp(g):
        return (adj.csr_t() @ g,)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="spmm")


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_value = a.value + b.value
    except ValueError as exc:
        raise ShapeError(f"add shapes {a.shape} + {b.shape}") from exc
    _check_finite(out_value, "add")
    a_shape, b_shape = a.shape, b.shape

    def vjp(g):
        return (_unbroadcast(g, a_shape) if a.requires_grad else None,
                _unbroadcast(g, b_shape) if b.requires_grad else None)

    return Tensor(out_value, _parents=(a, b), _vjp=vjp, _op="add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out_value = a.value * b.value
    except ValueError as exc:
        raise ShapeError(f"mul shapes {a.shape} * {b.shape}") from exc
    _check_finite(out_value, "mul")
    av, bv = a.value, b.value

    def vjp(g):
        return (_unbroadcast(g * bv, av.shape) if a.requires_grad else None,
                _unbroadcast(g * av, bv.shape) if b.requires_grad else None)

    return Tensor(out_value, _parents=(a, b), _vjp=vjp, _op="mul")


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    out_value = x.value * s
    _check_finite(out_value, "scale")

    def vjp(g):
        return (g * s,)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="scale")


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    out_value = np.where(mask, x.value, 0.0)

    def vjp(g):
        return (g * mask,)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="relu")


def leaky_relu(x: Tensor, alpha: float = 0.2) -> Tensor:
    mask = x.value > 0
    out_value = np.where(mask, x.value, alpha * x.value)
    _check_finite(out_value, "leaky_relu")

    def vjp(g):
        return (g * np.where(mask, 1.0, alpha),)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="leaky_relu")


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only when training (identity when rate=0)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.value.dtype)
    keep /= (1.0 - rate)
    out_value = x.value * keep

    def vjp(g):
        return (g * keep,)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="dropout")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    try:
        out_value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat shapes {[t.shape for t in tensors]}") from exc
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        slices = []
        for i, t in enumerate(tensors):
            if not t.requires_grad:
                slices.append(None)
                continue
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            slices.append(g[tuple(sl)])
        return tuple(slices)

    return Tensor(out_value, _parents=tuple(tensors), _vjp=vjp, _op="concat")


def gather(x: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather x[idx]; backward scatter-adds into the source rows."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather index must be 1-d, got {idx.shape}")
    out_value = x.value[idx]
    src_shape = x.shape

    def vjp(g):
        out = np.zeros(src_shape, dtype=g.dtype)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="gather")


def segment_sum(x: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of x into their segment; inverse gather on the way back."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape != (x.shape[0],):
        raise ShapeError(
            f"segment ids {segment_ids.shape} != rows {x.shape[0]}")
    out_value = np.zeros((num_segments,) + x.shape[1:], dtype=x.value.dtype)
    np.add.at(out_value, segment_ids, x.value)

    def vjp(g):
        return (g[segment_ids],)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="segment_sum")


def segment_softmax(scores: Tensor, segment_ids: np.ndarray,
                    num_segments: int) -> Tensor:
    """Columnwise softmax within each row segment (attention normalizer).

    Rows sharing a segment id form one softmax group per column. Stabilized
    by subtracting the per-segment max before exponentiation.
    """
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape != (scores.shape[0],):
        raise ShapeError(
            f"segment ids {segment_ids.shape} != rows {scores.shape[0]}")
    seg_max = np.full((num_segments,) + scores.shape[1:], -np.inf,
                      dtype=scores.value.dtype)
    np.maximum.at(seg_max, segment_ids, scores.value)
    shifted = scores.value - seg_max[segment_ids]
    exp = np.exp(shifted)
    denom = np.zeros_like(seg_max)
    np.add.at(denom, segment_ids, exp)
    alpha = exp / denom[segment_ids]
    _check_finite(alpha, "segment_softmax")

    def vjp(g):
        weighted = np.zeros_like(seg_max)
        np.add.at(weighted, segment_ids, alpha * g)
        return (alpha * (g - weighted[segment_ids]),)

    return Tensor(alpha, _parents=(scores,), _vjp=vjp, _op="segment_softmax")


def tensor_sum(x: Tensor) -> Tensor:
    out_value = np.array(x.value.sum())
    src_shape = x.shape

    def vjp(g):
        return (np.broadcast_to(g, src_shape).astype(g.dtype),)

    return Tensor(out_value, _parents=(x,), _vjp=vjp, _op="sum")


def softmax_rows(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Plain (non-taped) row softmax with log-sum-exp stabilization."""
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray,
                          mask_ids: np.ndarray, tau: float = 1.0) -> Tensor:
    """Mean −log softmax(logits/τ) at the true class over masked rows.

    Fused op: forward uses log-sum-exp; backward is (softmax − one-hot)
    scattered back into the full logit matrix.
    """
    mask_ids = np.asarray(mask_ids, dtype=np.int64)
    if mask_ids.size == 0:
        raise ShapeError("cross entropy over an empty mask")
    labels = np.asarray(labels, dtype=np.int64)
    y = labels[mask_ids]
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ShapeError("masked rows must carry labels in [0, C)")
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = logits.value[mask_ids] / tau
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1)) + zmax[:, 0]
    losses = lse - z[np.arange(y.size), y]
    out_value = np.array(losses.mean())
    _check_finite(out_value, "softmax_cross_entropy")
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    logits_shape = logits.shape

    def vjp(g):
        local = probs.copy()
        local[np.arange(y.size), y] -= 1.0
        local *= float(g) / (y.size * tau)
        full = np.zeros(logits_shape, dtype=local.dtype)
        np.add.at(full, mask_ids, local)
        return (full,)

    return Tensor(out_value, _parents=(logits,), _vjp=vjp,
                  _op="softmax_cross_entropy")
