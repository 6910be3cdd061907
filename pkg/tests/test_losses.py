import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidbench import losses
from liquidbench.autograd import DimensionError, Tensor
from liquidbench.gradcheck import check_gradients, numeric_grad, relative_error
from oracles import ctc_brute_force, random_log_probs


# ---------------------------------------------------------------- cross-entropy

def test_uniform_logits_give_log_k():
    loss = losses.cross_entropy(Tensor(np.zeros((3, 10))), [0, 4, 9])
    assert abs(loss.item() - math.log(10)) < 1e-12
    assert abs(loss.item() - 2.302585) < 1e-6


def test_confident_correct_logit_gives_zero_loss():
    logits = np.zeros((2, 4))
    logits[0, 1] = logits[1, 3] = 1000.0
    assert losses.cross_entropy(Tensor(logits), [1, 3]).item() < 1e-300 + 1e-12


def test_cross_entropy_gradient():
    rng = np.random.default_rng(0)
    z = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    y = [0, 3, 4, 1]
    assert check_gradients(lambda: losses.cross_entropy(z, y), [z]) < 1e-5


def test_cross_entropy_rejects_bad_targets():
    with pytest.raises(ValueError):
        losses.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(DimensionError):
        losses.cross_entropy(Tensor(np.zeros((2, 3))), [0, 1, 2])


def test_binary_cross_entropy_values_and_gradient():
    z = Tensor(np.array([[0.0], [2.0], [-3.0]]), requires_grad=True)
    y = [1, 0, 0]
    expect = np.mean([math.log(2), math.log1p(math.exp(2.0)), math.log1p(math.exp(-3.0))])
    assert abs(losses.binary_cross_entropy(z, y).item() - expect) < 1e-12
    assert check_gradients(lambda: losses.binary_cross_entropy(z, y), [z]) < 1e-5


# ---------------------------------------------------------------- CTC

def test_ctc_two_step_uniform_example():
    lp = np.log(np.full((2, 2), 0.5))
    loss = losses.ctc_loss(lp, [1]).item()
    assert abs(loss + math.log(0.75)) < 1e-12
    assert abs(loss - 0.287682) < 1e-6


def test_ctc_single_forced_alignment():
    lp = np.log(np.array([[1e-300, 1.0]]))
    assert abs(losses.ctc_loss(lp, [1]).item()) < 1e-12


def test_ctc_empty_target_is_all_blank_path():
    rng = np.random.default_rng(1)
    lp = random_log_probs(rng, 4, 3)
    assert abs(losses.ctc_loss(lp, []).item() + lp[:, 0].sum()) < 1e-12


def test_ctc_random_instance_matches_enumeration():
    rng = np.random.default_rng(5)
    lp = random_log_probs(rng, 5, 4)
    assert abs(losses.ctc_loss(lp, [2, 3]).item() - ctc_brute_force(lp, [2, 3])) < 1e-10


@given(st.integers(1, 5), st.integers(1, 3), st.data())
@settings(max_examples=80, deadline=None)
def test_ctc_matches_enumeration(T, v, data):
    target = data.draw(st.lists(st.integers(1, v), max_size=3))
    lp = random_log_probs(np.random.default_rng(data.draw(st.integers(0, 10**6))), T, v + 1)
    got = losses.ctc_loss(lp, target).item()
    want = ctc_brute_force(lp, target)
    if math.isinf(want):
        assert math.isinf(got)
    else:
        assert abs(got - want) < 1e-10


@pytest.mark.parametrize("T,target", [(4, [1, 2]), (5, [1, 1]), (6, [2, 1, 2]), (3, [])])
def test_ctc_gradient(T, target):
    rng = np.random.default_rng(T)
    lp = Tensor(random_log_probs(rng, T, 3), requires_grad=True)
    assert check_gradients(lambda: losses.ctc_loss(lp, target), [lp]) < 1e-5


def test_ctc_feasibility_rule():
    assert losses.ctc_min_steps([1, 1]) == 3
    assert losses.ctc_min_steps([1, 2]) == 2
    lp = random_log_probs(np.random.default_rng(2), 2, 3)
    assert losses.ctc_loss(lp, [1, 1]).item() == math.inf
    assert losses.ctc_loss(lp, [1, 2, 1]).item() == math.inf


def test_ctc_rejects_blank_and_out_of_range_labels():
    lp = random_log_probs(np.random.default_rng(3), 3, 3)
    with pytest.raises(ValueError):
        losses.ctc_loss(lp, [0])
    with pytest.raises(ValueError):
        losses.ctc_loss(lp, [3])


def test_ctc_batch_skips_infeasible_with_warning(caplog):
    rng = np.random.default_rng(4)
    lp = np.stack([random_log_probs(rng, 4, 3) for _ in range(3)])
    targets = [[1], [1, 2, 1, 2, 1], [2, 2]]
    with caplog.at_level(logging.WARNING, logger="liquidbench.losses"):
        loss, skipped = losses.ctc_loss_batch(Tensor(lp), targets, [4, 4, 4])
    assert skipped == [1]
    assert "infeasible" in caplog.text
    expect = (ctc_brute_force(lp[0], [1]) + ctc_brute_force(lp[2], [2, 2])) / 2
    assert abs(loss.item() - expect) < 1e-10


def test_ctc_batch_respects_lengths():
    rng = np.random.default_rng(6)
    lp = Tensor(np.stack([random_log_probs(rng, 5, 3) for _ in range(2)]), requires_grad=True)
    loss, _ = losses.ctc_loss_batch(lp, [[1], [2, 1]], [3, 5])
    expect = (ctc_brute_force(lp.data[0, :3], [1]) + ctc_brute_force(lp.data[1], [2, 1])) / 2
    assert abs(loss.item() - expect) < 1e-10
    assert check_gradients(lambda: losses.ctc_loss_batch(lp, [[1], [2, 1]], [3, 5])[0], [lp]) < 1e-5


def test_ctc_gradient_is_zero_past_length():
    rng = np.random.default_rng(7)
    lp = Tensor(random_log_probs(rng, 4, 3)[None], requires_grad=True)
    fn = lambda: losses.ctc_loss_batch(lp, [[1]], [2])[0].item()  # noqa: E731
    num = numeric_grad(fn, lp)
    assert np.all(num[0, 2:] == 0.0)
    _, g = losses.ctc_forward_backward(lp.data[0, :2], [1])
    assert relative_error(g, num[0, :2]) < 1e-6


# ---------------------------------------------------------------- greedy decode

def one_hot_path(path, C=3):
    lp = np.full((len(path), C), -10.0)
    lp[np.arange(len(path)), path] = 0.0
    return lp


@pytest.mark.parametrize("path,expect", [
    ([1, 1, 0, 2], [1, 2]),
    ([0, 0, 0], []),
    ([1, 0, 1], [1, 1]),
    ([], []),
])
def test_greedy_decode(path, expect):
    assert losses.ctc_greedy_decode(one_hot_path(path)) == expect
