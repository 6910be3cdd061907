import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidbench.optim import AdamState, adam_step, clip_grad_norm, global_norm, lr_schedule


def scalar_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8, wd=0.0, decoupled=False):
    """Textbook scalar recurrence, written independently of the vectorized one."""
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        if wd and not decoupled:
            g = g + wd * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        if wd and decoupled:
            p = p - lr * wd * p
        p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_zero_gradient_leaves_parameters():
    p = np.array([1.0, -2.0])
    st_ = AdamState.zeros_like([p])
    for _ in range(3):
        adam_step([p], [np.zeros(2)], st_, lr=0.1)
    assert p.tolist() == [1.0, -2.0]


def test_first_step_hand_value():
    p = np.array([0.0])
    adam_step([p], [np.array([1.0])], AdamState.zeros_like([p]), lr=0.1)
    assert abs(p[0] - (-0.1 / (1 + 1e-8))) < 1e-15
    assert -0.1 < p[0] < -0.0999999


def test_weight_decay_coupling_differs():
    a, b = np.array([1.0, 2.0]), np.array([1.0, 2.0])
    g = np.array([0.3, -0.2])
    adam_step([a], [g], AdamState.zeros_like([a]), lr=0.1, weight_decay=0.1, decoupled=False)
    adam_step([b], [g], AdamState.zeros_like([b]), lr=0.1, weight_decay=0.1, decoupled=True)
    assert not np.array_equal(a, b)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(-3, 3),
       st.sampled_from([0.0, 0.05]), st.booleans())
@settings(max_examples=1000, deadline=None)
def test_matches_scalar_reference(grads, p0, wd, decoupled):
    p = np.array([p0])
    state = AdamState.zeros_like([p])
    for g in grads:
        adam_step([p], [np.array([g])], state, lr=0.01, weight_decay=wd, decoupled=decoupled)
    ref = scalar_adam(p0, grads, 0.01, wd=wd, decoupled=decoupled)
    assert abs(p[0] - ref) <= 1e-12 * max(1.0, abs(ref))
    assert state.step == len(grads)


def test_shape_mismatch():
    p = np.zeros(2)
    with pytest.raises(ValueError):
        adam_step([p], [np.zeros(3)], AdamState.zeros_like([p]), lr=0.1)
    with pytest.raises(ValueError):
        adam_step([p], [], AdamState.zeros_like([p]), lr=0.1)


def test_cosine_schedule():
    assert lr_schedule("cosine", 0.1, 0, 10) == 0.1
    assert lr_schedule("cosine", 0.1, 9, 10) == 0.1 * (1 + math.cos(math.pi * 9 / 10)) / 2
    assert lr_schedule("cosine", 0.1, 9, 10) < 0.003


def test_step_schedule():
    assert abs(lr_schedule("step", 1e-3, 25, 30, interval=10, gamma=0.1) - 1e-5) < 1e-20
    assert lr_schedule("step", 1e-3, 9, interval=10) == 1e-3
    assert lr_schedule("none", 1e-3, 4, 5) == 1e-3


@pytest.mark.parametrize("args", [("cosine", 0.1, 10, 10), ("none", 0.1, -1, 5), ("cosine", 0.1, 0, None),
                                  ("linear", 0.1, 0, 5)])
def test_schedule_errors(args):
    with pytest.raises(ValueError):
        lr_schedule(*args)
    with pytest.raises(ValueError):
        lr_schedule("step", 0.1, 0, 5, interval=0)


def test_clip_examples():
    small = [np.array([0.3, 0.4])]
    assert clip_grad_norm(small, 1.0)[0] is small[0]
    out = clip_grad_norm([np.array([3.0, 4.0])], 1.0)
    np.testing.assert_allclose(out[0], [0.6, 0.8], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        clip_grad_norm(small, 0.0)


@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5), min_size=1, max_size=4),
       st.floats(1e-3, 1e3))
@settings(max_examples=300, deadline=None)
def test_clip_bounds_norm(vectors, max_norm):
    grads = [np.array(v) for v in vectors]
    clipped = clip_grad_norm(grads, max_norm)
    assert global_norm(clipped) <= max_norm + 1e-12
    if global_norm(grads) <= max_norm:
        assert all(np.array_equal(a, b) for a, b in zip(grads, clipped))
