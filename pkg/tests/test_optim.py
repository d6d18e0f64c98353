import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viewgram.autodiff import Tensor
from viewgram.errors import ShapeMismatchError
from viewgram.optim import OptimizerState, clip_gradients, sgd_step
from viewgram.rng import Rng


def _param(values, grad=None):
    p = Tensor(values, requires_grad=True)
    if grad is not None:
        p.grad = np.asarray(grad, dtype=np.float64)
    return p


def test_clip_clamps_to_bound():
    g = np.array([0.5, -0.02, 0.005])
    clip_gradients([g], 0.01)
    assert g.tolist() == [0.01, -0.01, 0.005]


def test_clip_identity_inside_bound():
    g = np.array([0.001, -0.009, 0.0])
    before = g.copy()
    clip_gradients([g], 0.01)
    assert (g == before).all()


def test_clip_extreme_value():
    g = np.array([-1e9])
    clip_gradients([g], 0.01)
    assert g.tolist() == [-0.01]


def test_clip_rejects_non_positive_bound():
    with pytest.raises(ValueError):
        clip_gradients([np.zeros(3)], 0.0)


@given(st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=20))
@settings(max_examples=100, deadline=None)
def test_clip_is_idempotent(values):
    g = np.array(values)
    clip_gradients([g], 0.01)
    once = g.copy()
    clip_gradients([g], 0.01)
    assert (g == once).all()


def test_sgd_single_step_hand_values():
    # paper hyperparameters: lr 0.001, momentum 0.9, weight decay 1e-4
    p = _param([1.0], grad=[0.1])
    state = OptimizerState(learning_rate=0.001, momentum=0.9, weight_decay=1e-4)
    state.init_velocities([p])
    sgd_step([p], state)
    assert abs(state.velocities[0][0] - 0.1001) < 1e-15
    assert abs(p.data[0] - 0.9998999) < 1e-15


def test_sgd_zero_gradient_is_fixed_point():
    p = _param([2.5, -1.0], grad=[0.0, 0.0])
    state = OptimizerState(learning_rate=0.01, momentum=0.9, weight_decay=0.0)
    state.init_velocities([p])
    sgd_step([p], state)
    assert p.data.tolist() == [2.5, -1.0]


def test_sgd_two_steps_accumulate_geometrically():
    g = 0.2
    p = _param([1.0])
    state = OptimizerState(learning_rate=0.001, momentum=0.9, weight_decay=0.0)
    state.init_velocities([p])
    for _ in range(2):
        p.grad = np.array([g])
        sgd_step([p], state)
    assert abs(state.velocities[0][0] - g * 1.9) < 1e-15


def test_sgd_without_momentum_reduces_to_plain_descent():
    p = _param([1.5], grad=[0.3])
    state = OptimizerState(learning_rate=0.1, momentum=0.0, weight_decay=0.0)
    state.init_velocities([p])
    sgd_step([p], state)
    assert p.data[0] == 1.5 - 0.1 * 0.3


def test_sgd_missing_grad_counts_as_zero():
    p = _param([1.0])  # grad stays None
    state = OptimizerState(learning_rate=0.1, momentum=0.9, weight_decay=0.0)
    state.init_velocities([p])
    sgd_step([p], state)
    assert p.data[0] == 1.0


def test_sgd_shape_mismatch_raises():
    p = _param([1.0, 2.0], grad=[0.1])
    state = OptimizerState()
    state.init_velocities([p])
    with pytest.raises(ShapeMismatchError):
        sgd_step([p], state)


def test_update_magnitude_bound():
    # |delta| <= lr * (momentum * |v_prev| + clip + wd * |theta|) elementwise
    rng = Rng(11)
    state = OptimizerState(learning_rate=0.01, momentum=0.9, weight_decay=1e-3,
                           clip_bound=0.01)
    p = _param(rng.uniform(-2.0, 2.0, (64,)))
    state.init_velocities([p])
    state.velocities[0][:] = rng.uniform(-0.5, 0.5, (64,))
    for _ in range(20):
        v_prev = state.velocities[0].copy()
        theta_prev = p.data.copy()
        p.grad = rng.uniform(-5.0, 5.0, (64,))
        clip_gradients([p], state.clip_bound)
        sgd_step([p], state)
        bound = state.learning_rate * (
            state.momentum * np.abs(v_prev)
            + state.clip_bound
            + state.weight_decay * np.abs(theta_prev)
        )
        assert (np.abs(p.data - theta_prev) <= bound * (1 + 1e-12) + 1e-15).all()
