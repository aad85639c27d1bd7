"""Adam with bias correction and decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import ModelParams

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators per parameter plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor.value)
            state.v[name] = np.zeros_like(tensor.value)
        return state


def adam_step(params: ModelParams, state: AdamState, lr: float,
              weight_decay: float = 0.0, beta1: float = BETA1,
              beta2: float = BETA2, eps: float = EPSILON) -> None:
    """One update in place; parameters without gradients are skipped.

    Weight decay is decoupled: applied directly to the weights, not mixed
    into the moment estimates.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        if weight_decay:
            p.value -= lr * weight_decay * p.value
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
