import numpy as np
import pytest
from conftest import make_ds

from edtl.dataset import fit_standardize
from edtl.nn import TrainConfig, mse_loss
from edtl.transfer import (BaseModelSpec, TransferError, adapt_input, fine_tune,
                           make_base_specs, pretrain)

HIDDEN = (8, 8, 8, 8, 8)
FAST = TrainConfig(epochs=3, seed=1)


@pytest.fixture(scope="module")
def pre():
    r = np.random.default_rng(0)
    x = r.uniform(-1, 1, (300, 10))
    return pretrain(make_ds(x, x @ np.linspace(1, 2, 10)), FAST, HIDDEN)


def _target(n=120, d=7, seed=1):
    r = np.random.default_rng(seed)
    x = r.uniform(-1, 1, (n, d))
    return fit_standardize(make_ds(x, 2 * x.sum(1)))[0]


def test_pretrain_records_losses_and_is_deterministic(pre):
    assert pre.val_mse >= 0 and pre.train_mse >= 0
    assert pre.n_hidden == 4
    r = np.random.default_rng(0)
    x = r.uniform(-1, 1, (300, 10))
    again = pretrain(make_ds(x, x @ np.linspace(1, 2, 10)), FAST, HIDDEN)
    assert again.net.equals(pre.net)


def test_pretrain_empty():
    with pytest.raises(TransferError):
        pretrain(make_ds(np.empty((0, 2)), []), FAST, HIDDEN)


def test_adapt_input_contract(pre):
    net = adapt_input(pre, 7, seed=3)
    assert len(net) == len(pre.net)
    assert net.layers[0].weights.shape == (8, 7)
    assert net.layers[0].activation == "relu"
    for a, b in zip(net.layers[1:], pre.net.layers[1:]):
        assert a is b


def test_adapt_same_schema_still_reinitialised(pre):
    net = adapt_input(pre, pre.source_schema, seed=3)
    assert not np.array_equal(net.layers[0].weights, pre.net.layers[0].weights)


def test_adapt_seeds_differ_only_in_first_layer(pre):
    a, b = adapt_input(pre, 7, 1), adapt_input(pre, 7, 2)
    assert not np.array_equal(a.layers[0].weights, b.layers[0].weights)
    assert all(x is y for x, y in zip(a.layers[1:], b.layers[1:]))


def test_make_base_specs():
    assert len(make_base_specs(4)) == 5
    assert [s.name for s in make_base_specs(1)] == ["tune_hidden_1", "tune_all"]
    with pytest.raises(TransferError):
        make_base_specs(0)


def test_tune_hidden_mask():
    m = BaseModelSpec("tune_hidden", 2).mask(6)
    assert m.trainable == (True, False, True, False, False, True)
    assert BaseModelSpec("tune_hidden", 2).mask(6, train_output=False).trainable[-1] is False
    with pytest.raises(TransferError):
        BaseModelSpec("tune_hidden", 5).mask(6)


def test_spec_validation_and_round_trip():
    for bad in (("tune_hidden", None), ("tune_all", 1), ("nope", None)):
        with pytest.raises(TransferError):
            BaseModelSpec(*bad)
    s = BaseModelSpec("tune_hidden", 3)
    assert BaseModelSpec.from_dict(s.to_dict()) == s


def test_fine_tune_hidden_three(pre):
    ds = _target()
    adapted = adapt_input(pre, ds.schema, 0)
    out = fine_tune(adapted, BaseModelSpec("tune_hidden", 3), ds, FAST)
    changed = [not np.array_equal(a.weights, b.weights) for a, b in zip(out.layers, adapted.layers)]
    assert changed == [True, False, False, True, False, True]
    for j in (1, 2, 4):
        np.testing.assert_array_equal(out.layers[j].bias, adapted.layers[j].bias)


def test_any_spec_reduces_training_loss(pre):
    x = np.random.default_rng(5).uniform(-1, 1, (200, 1))
    ds = fit_standardize(make_ds(x, 2 * x[:, 0]))[0]
    adapted = adapt_input(pre, ds.schema, 0)
    before = mse_loss(ds.targets, adapted.predict(ds.rows))
    for spec in make_base_specs(pre.n_hidden):
        tuned = fine_tune(adapted, spec, ds, TrainConfig(epochs=10, seed=2))
        assert mse_loss(ds.targets, tuned.predict(ds.rows)) < before
