import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidbench.data.batch import SequenceBatch
from liquidbench.data.synth import synth_task
from liquidbench.evaluation import evaluate
from liquidbench.model import ModelConfig, build_model
from liquidbench.rng import RngStream
from liquidbench.stress import (DROPOUT_MODES, StressPlan, apply_temporal_dropout, drop_pattern, merge_dt,
                                run_stress_sweep)


def random_batch(seed, B=4, T=9, D=2, ragged=True):
    rng = np.random.default_rng(seed)
    mask = np.ones((B, T))
    if ragged:
        for i in range(B):
            mask[i, rng.integers(1, T + 1):] = 0.0
    x = rng.normal(size=(B, T, D)) * mask[:, :, None]
    dt = np.where(mask > 0, rng.uniform(0.1, 2.0, (B, T)), 1.0)
    return SequenceBatch(x, dt, mask, np.arange(B))


@pytest.mark.parametrize("mode", DROPOUT_MODES)
def test_rate_zero_is_identity(mode):
    b = random_batch(0)
    out = apply_temporal_dropout(b, 0.0, mode, 3)
    for f in ("inputs", "delta_t", "mask"):
        assert np.array_equal(getattr(out, f), getattr(b, f))


def test_merge_middle_drop():
    assert merge_dt([1.0, 1.0, 1.0], [True, False, True]).tolist() == [1.0, 2.0]


def test_merge_leading_and_trailing_runs():
    assert merge_dt([1.0, 2.0, 3.0, 4.0, 5.0], [False, True, False, True, False]).tolist() == [3.0, 12.0]


def test_drop_fraction_concentrates():
    r = RngStream(0, "frac")
    dropped = sum(int((~drop_pattern(100, 0.3, r.split(i))).sum()) for i in range(100))
    assert abs(dropped / 10_000 - 0.3) <= 0.02


@given(st.integers(1, 5), st.floats(0.0, 0.99))
@settings(max_examples=100, deadline=None)
def test_at_least_one_step_survives(n, rate):
    assert drop_pattern(n, rate, RngStream(n, "s")).any()


def test_zero_fill_keeps_layout():
    b = random_batch(1)
    out = apply_temporal_dropout(b, 0.5, "zero_fill", 4)
    assert out.inputs.shape == b.inputs.shape
    assert np.array_equal(out.delta_t, b.delta_t)
    assert np.all(out.mask <= b.mask)
    assert np.all(out.mask.sum(axis=1) >= 1)
    assert not out.inputs[out.mask == 0].any()


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
@settings(max_examples=100, deadline=None)
def test_merge_conserves_elapsed_time(seed, rate):
    b = random_batch(seed % 1000)
    out = apply_temporal_dropout(b, rate, "drop_merge_dt", seed)
    total_in = (b.delta_t * b.mask).sum(axis=1)
    total_out = (out.delta_t * out.mask).sum(axis=1)
    np.testing.assert_allclose(total_out, total_in, rtol=1e-12)
    assert np.all(out.mask.sum(axis=1) >= 1)
    assert np.all(out.mask.sum(axis=1) <= b.mask.sum(axis=1))


def test_merge_keeps_surviving_inputs_in_order():
    b = random_batch(2, ragged=False)
    out = apply_temporal_dropout(b, 0.4, "drop_merge_dt", 9)
    for i in range(b.batch_size):
        n = int(out.mask[i].sum())
        rows = [np.flatnonzero((b.inputs[i] == v).all(axis=1))[0] for v in out.inputs[i, :n]]
        assert rows == sorted(rows)


@pytest.mark.parametrize("mode", DROPOUT_MODES)
def test_dropout_is_deterministic_and_row_local(mode):
    b = random_batch(3)
    a1 = apply_temporal_dropout(b, 0.5, mode, 11)
    a2 = apply_temporal_dropout(b, 0.5, mode, 11)
    assert np.array_equal(a1.inputs, a2.inputs) and np.array_equal(a1.delta_t, a2.delta_t)
    # row 0 alone sees the same pattern as row 0 in the batch
    one = SequenceBatch(b.inputs[:1], b.delta_t[:1], b.mask[:1])
    solo = apply_temporal_dropout(one, 0.5, mode, 11)
    n = int(solo.mask[0].sum())
    assert np.array_equal(solo.inputs[0, :n], a1.inputs[0, :n])


def test_invalid_arguments():
    b = random_batch(0)
    with pytest.raises(ValueError):
        apply_temporal_dropout(b, 1.0, "zero_fill", 0)
    with pytest.raises(ValueError):
        apply_temporal_dropout(b, 0.3, "shuffle", 0)


@pytest.mark.parametrize("kw", [dict(rates=()), dict(rates=(0.5, 0.3)), dict(rates=(0.3, 0.3)),
                                dict(rates=(1.0,)), dict(mode="x"), dict(trials=0)])
def test_plan_validation(kw):
    with pytest.raises(ValueError):
        StressPlan(**kw)


@pytest.fixture(scope="module")
def small_setup():
    data = synth_task("irregular_sine_class", 0, 60)
    model = build_model(ModelConfig(input_dim=2, hidden_dim=6), 0)
    return model, data


def test_rate_zero_matches_plain_evaluation(small_setup):
    model, data = small_setup
    res = run_stress_sweep(model, data, StressPlan(rates=(0.0,)))
    assert list(res.reports) == [(0.0, 0)]
    plain = evaluate(model, data)
    assert res.reports[(0.0, 0)].accuracy == plain.accuracy
    assert res.reports[(0.0, 0)].confusion == plain.confusion


@pytest.mark.parametrize("mode", DROPOUT_MODES)
def test_sweep_is_deterministic(small_setup, mode):
    model, data = small_setup
    plan = StressPlan(rates=(0.0, 0.5), mode=mode, trials=3, base_seed=2)
    a = run_stress_sweep(model, data, plan, batch_size=16)
    b = run_stress_sweep(model, data, plan, batch_size=16)
    assert a.to_dict() == b.to_dict()
    assert len(a.reports) == 4
    assert [s.rate for s in a.aggregate] == [0.0, 0.5]
    assert all(s.q1 <= s.median <= s.q3 for s in a.aggregate)


def test_non_monotone_medians_warn(small_setup, caplog):
    model, data = small_setup
    with caplog.at_level(logging.WARNING, logger="liquidbench.stress"):
        res = run_stress_sweep(model, data, StressPlan(rates=(0.0, 0.3, 0.6, 0.9), trials=2))
    assert res.monotone == ("not non-increasing" not in caplog.text)
    meds = [s.median for s in res.aggregate]
    assert res.monotone == all(b <= a for a, b in zip(meds, meds[1:]))
