"""Adam update rule against hand-computed steps."""

import numpy as np
import pytest

from demograph.nn.layers import ModelParams
from demograph.nn.optim import BETA1, BETA2, EPSILON, AdamState, adam_step
from demograph.nn.tensor import parameter


def _params_with_grad(value, grad):
    params = ModelParams()
    p = parameter(value)
    p.grad = np.asarray(grad, dtype=np.float64)
    params.add("w", p)
    return params, p


def test_first_step_matches_hand_computation():
    params, p = _params_with_grad([[1.0, -2.0]], [[0.5, -1.5]])
    state = AdamState.for_params(params)
    adam_step(params, state, lr=0.1)

    g = np.array([[0.5, -1.5]])
    m_hat = (1 - BETA1) * g / (1 - BETA1)   # == g after bias correction
    v_hat = (1 - BETA2) * g**2 / (1 - BETA2)
    expected = np.array([[1.0, -2.0]]) - 0.1 * m_hat / (np.sqrt(v_hat)
                                                        + EPSILON)
    np.testing.assert_allclose(p.value, expected, rtol=1e-15)
    # with v_hat = g^2 the step size is ~lr * sign(g)
    np.testing.assert_allclose(p.value, [[1.0 - 0.1, -2.0 + 0.1]], atol=1e-8)
    assert state.t == 1


def test_two_steps_track_reference_implementation():
    rng = np.random.default_rng(0)
    value = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(2)]

    params, p = _params_with_grad(value.copy(), grads[0])
    state = AdamState.for_params(params)

    # independent reference
    ref = value.copy()
    m = np.zeros_like(ref)
    v = np.zeros_like(ref)
    for t, g in enumerate(grads, start=1):
        m = BETA1 * m + (1 - BETA1) * g
        v = BETA2 * v + (1 - BETA2) * g * g
        ref -= 0.05 * (m / (1 - BETA1**t)) / (
            np.sqrt(v / (1 - BETA2**t)) + EPSILON)

    adam_step(params, state, lr=0.05)
    p.grad = grads[1]
    adam_step(params, state, lr=0.05)
    np.testing.assert_allclose(p.value, ref, rtol=1e-14)
    assert state.t == 2


def test_weight_decay_is_decoupled():
    # zero gradient: decay still shrinks the weight, moments stay zero
    params, p = _params_with_grad([[10.0]], [[0.0]])
    state = AdamState.for_params(params)
    adam_step(params, state, lr=0.1, weight_decay=0.5)
    assert p.value[0, 0] == pytest.approx(10.0 * (1 - 0.1 * 0.5))
    np.testing.assert_allclose(state.m["w"], 0.0)
    np.testing.assert_allclose(state.v["w"], 0.0)


def test_weight_decay_applies_before_gradient_step():
    params, p = _params_with_grad([[8.0]], [[1.0]])
    state = AdamState.for_params(params)
    adam_step(params, state, lr=0.1, weight_decay=0.25)
    decayed = 8.0 - 0.1 * 0.25 * 8.0
    grad_step = 0.1 * 1.0 / (1.0 + EPSILON)
    assert p.value[0, 0] == pytest.approx(decayed - grad_step, rel=1e-12)


def test_parameters_without_gradients_are_skipped():
    params = ModelParams()
    frozen = parameter([[3.0]])
    params.add("frozen", frozen)
    state = AdamState.for_params(params)
    adam_step(params, state, lr=0.1, weight_decay=0.9)
    assert frozen.value[0, 0] == 3.0, "no grad, no decay, no step"
    assert state.t == 1, "step counter still advances"


def test_learning_rate_validation():
    params, _ = _params_with_grad([[1.0]], [[1.0]])
    state = AdamState.for_params(params)
    for lr in (0.0, -0.1):
        with pytest.raises(ValueError, match="learning rate"):
            adam_step(params, state, lr=lr)


def test_updates_are_bitwise_deterministic():
    def run():
        params, p = _params_with_grad([[1.0, 2.0]], [[0.3, -0.7]])
        state = AdamState.for_params(params)
        for _ in range(5):
            adam_step(params, state, lr=0.01, weight_decay=0.1)
        return p.value.tobytes()

    assert run() == run()


def test_state_covers_every_parameter():
    params = ModelParams()
    params.add("a", parameter(np.zeros((2, 3))))
    params.add("b", parameter(np.zeros((1, 4))))
    state = AdamState.for_params(params)
    assert set(state.m) == {"a", "b"}
    assert state.m["a"].shape == (2, 3)
    assert state.v["b"].shape == (1, 4)
    assert state.t == 0
