import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidbench import cells, evaluation
from liquidbench.autograd import Tensor
from liquidbench.data.batch import SequenceBatch
from liquidbench.gradcheck import check_gradients
from liquidbench.model import (ConfigError, ModelConfig, build_model, closed_form_param_count,
                               forward_classify, forward_ctc)
from liquidbench.rng import RngStream


def make_batch(B, T, D, seed=0, targets=None):
    rng = np.random.default_rng(seed)
    return SequenceBatch(rng.normal(size=(B, T, D)), rng.uniform(0.1, 2.0, (B, T)),
                         np.ones((B, T)), targets)


def test_same_seed_gives_identical_parameters():
    cfg = ModelConfig(input_dim=3, cell="cfc", hidden_dim=8, encoder="linear_norm_relu", encoder_dim=4,
                      mlp_hidden=5, n_out=3)
    a, b = build_model(cfg, 7), build_model(cfg, 7)
    assert a.params.keys() == b.params.keys()
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
    c = build_model(cfg, 8)
    assert not np.array_equal(a.params["cell.W_gate"].data, c.params["cell.W_gate"].data)


def test_lstm_core_count():
    model = build_model(ModelConfig(input_dim=5, cell="lstm", hidden_dim=4), 0)
    assert model.param_counts()["core"] == 4 * (5 * 4 + 4 * 4 + 4) == 160


CONFIGS = [
    dict(cell=cell, encoder=enc, encoder_dim=6 if enc != "identity" else 0, head=head,
         aggregation=agg, mlp_hidden=mh, recurrent_gate=rg, cfc_target=tm)
    for cell in cells.CELL_KINDS
    for enc in ("identity", "linear_norm_relu")
    for head, agg, mh in (("softmax_classes", "mean_pool", 0), ("softmax_classes", "global_avg_pool", 7),
                          ("binary_logit", "last_state", 0), ("ctc_vocab", "per_step", 0))
    for rg in (True, False)
    for tm in cells.TARGET_MODES
    if cell == "cfc" or (rg and tm == "head")
]


@pytest.mark.parametrize("kw", CONFIGS)
def test_closed_form_matches_built_model(kw):
    cfg = ModelConfig(input_dim=3, hidden_dim=5, n_out=4, **kw)
    assert build_model(cfg, 0).param_counts() == closed_form_param_count(cfg)


def test_cfc_core_formulas():
    d, m = 3, 5
    for rg in (True, False):
        sq = m * m if rg else 0
        head = ModelConfig(input_dim=d, hidden_dim=m, recurrent_gate=rg, cfc_target="head")
        const = ModelConfig(input_dim=d, hidden_dim=m, recurrent_gate=rg, cfc_target="constant")
        assert closed_form_param_count(head)["core"] == 2 * (d * m + sq + m) + m
        assert closed_form_param_count(const)["core"] == (d * m + sq + m) + 2 * m
    ltc = ModelConfig(input_dim=d, hidden_dim=m, cell="ltc")
    assert closed_form_param_count(ltc)["core"] == 2 * (d * m + m * m + m)


@pytest.mark.parametrize("kw", [
    dict(head="ctc_vocab", aggregation="mean_pool"),
    dict(head="softmax_classes", aggregation="per_step"),
    dict(head="binary_logit", aggregation="mean_pool"),
    dict(encoder="linear_norm_relu", encoder_dim=0),
    dict(encoder="conv"),
    dict(dropout=1.0),
    dict(cell="gru"),
    dict(cfc_target="bias"),
    dict(hidden_dim=0),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigError):
        ModelConfig(input_dim=3, **kw)


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)


@pytest.mark.parametrize("cell", cells.CELL_KINDS)
@pytest.mark.parametrize("head,agg", [("softmax_classes", "mean_pool"), ("binary_logit", "last_state"),
                                      ("ctc_vocab", "per_step")])
def test_single_sample_single_step_smoke(cell, head, agg):
    model = build_model(ModelConfig(input_dim=2, cell=cell, hidden_dim=3, head=head, aggregation=agg,
                                    n_out=4), 1)
    out = model.forward(make_batch(1, 1, 2))
    assert np.all(np.isfinite(out.logits.data))


@pytest.mark.parametrize("cell", cells.CELL_KINDS)
def test_batch_permutation_permutes_logits(cell):
    model = build_model(ModelConfig(input_dim=3, cell=cell, hidden_dim=6, n_out=3), 2)
    batch = make_batch(5, 4, 3, seed=2)
    batch.mask[1, 3] = 0.0
    perm = np.array([3, 0, 4, 1, 2])
    moved = SequenceBatch(batch.inputs[perm], batch.delta_t[perm], batch.mask[perm])
    a = model.forward(batch).logits.data
    b = model.forward(moved).logits.data
    np.testing.assert_allclose(b, a[perm], rtol=0, atol=1e-14)


@pytest.mark.parametrize("cell", cells.CELL_KINDS)
@pytest.mark.parametrize("head,agg", [("softmax_classes", "mean_pool"), ("binary_logit", "last_state"),
                                      ("ctc_vocab", "per_step")])
def test_full_model_gradient(cell, head, agg):
    cfg = ModelConfig(input_dim=2, cell=cell, hidden_dim=3, encoder="linear_norm_relu", encoder_dim=3,
                      head=head, aggregation=agg, n_out=3, mlp_hidden=4 if agg == "mean_pool" else 0)
    model = build_model(cfg, 3)
    targets = {"softmax_classes": np.array([0, 2]), "binary_logit": np.array([1, 0]),
               "ctc_vocab": [[1, 2], [3]]}[head]
    batch = make_batch(2, 5, 2, seed=3, targets=targets)

    def loss():
        return evaluation.batch_loss(model, batch)[0]

    assert check_gradients(loss, model.parameters()) < 1e-4


def test_ctc_head_normalized_and_shaped():
    model = build_model(ModelConfig(input_dim=3, hidden_dim=5, head="ctc_vocab", aggregation="per_step",
                                    n_out=4), 0)
    lp = forward_ctc(model, make_batch(2, 7, 3)).logits.data
    assert lp.shape == (2, 7, 5)
    assert np.max(np.abs(np.logaddexp.reduce(lp, axis=-1))) < 1e-9


def test_ctc_head_short_input_gives_infinite_loss():
    model = build_model(ModelConfig(input_dim=3, hidden_dim=5, head="ctc_vocab", aggregation="per_step",
                                    n_out=4), 0)
    batch = make_batch(1, 2, 3, targets=[[1, 2, 3]])
    loss, _ = evaluation.batch_loss(model, batch)
    assert loss.item() == np.inf


def test_head_specific_entry_points():
    clf = build_model(ModelConfig(input_dim=3, hidden_dim=4), 0)
    ctc = build_model(ModelConfig(input_dim=3, hidden_dim=4, head="ctc_vocab", aggregation="per_step"), 0)
    batch = make_batch(2, 3, 3)
    assert forward_classify(clf, batch).logits.shape == (2, 2)
    with pytest.raises(ConfigError):
        forward_ctc(clf, batch)
    with pytest.raises(ConfigError):
        forward_classify(ctc, batch)


def test_wrong_input_dim_raises():
    model = build_model(ModelConfig(input_dim=3, hidden_dim=4), 0)
    with pytest.raises(ValueError, match="input_dim"):
        model.forward(make_batch(1, 2, 4))


@given(st.integers(1, 4), st.integers(1, 3), st.sampled_from(cells.CELL_KINDS))
@settings(max_examples=30, deadline=None)
def test_trailing_padding_does_not_change_logits(T, pad, cell):
    model = build_model(ModelConfig(input_dim=2, cell=cell, hidden_dim=3, n_out=3), 4)
    batch = make_batch(2, T, 2, seed=T)
    rng = np.random.default_rng(pad)
    padded = SequenceBatch(
        np.concatenate([batch.inputs, rng.normal(size=(2, pad, 2))], axis=1),
        np.concatenate([batch.delta_t, rng.uniform(0.1, 2, (2, pad))], axis=1),
        np.concatenate([batch.mask, np.zeros((2, pad))], axis=1))
    np.testing.assert_allclose(model.forward(padded).logits.data, model.forward(batch).logits.data,
                               rtol=0, atol=1e-13)


def test_dropout_only_in_training_mode():
    model = build_model(ModelConfig(input_dim=3, hidden_dim=6, mlp_hidden=16, dropout=0.5), 5)
    batch = make_batch(4, 3, 3)
    eval_a = model.forward(batch).logits.data
    eval_b = model.forward(batch, train=False).logits.data
    assert np.array_equal(eval_a, eval_b)
    train_a = model.forward(batch, train=True, rng=RngStream(0, "d")).logits.data
    train_b = model.forward(batch, train=True, rng=RngStream(0, "d")).logits.data
    assert np.array_equal(train_a, train_b)
    assert not np.array_equal(train_a, eval_a)
    with pytest.raises(ValueError, match="rng"):
        model.forward(batch, train=True)


def test_parameters_are_leaf_tensors():
    model = build_model(ModelConfig(input_dim=3, hidden_dim=4, encoder="linear_norm_relu", encoder_dim=2), 0)
    assert all(isinstance(p, Tensor) and p.requires_grad for p in model.parameters())
    assert model.num_parameters() == model.param_counts()["total"]
    assert np.array_equal(model.params["enc.gamma"].data, np.ones(2))
