import numpy as np
import pytest

from fedharm.features import featurize_examples
from fedharm.model import AdamState, ModelSpec, TrainConfig, adam_step, gradient, init_params
from fedharm.partition import PartitionSpec, partition
from fedharm.training import TrainingError, local_train

SPEC = ModelSpec(hash_dimension=512)


@pytest.fixture(scope="module")
def fd(synth_small):
    return partition(synth_small, PartitionSpec(client_size=40, seed=2), 5)


def test_zero_lr_gives_zero_delta(fd):
    delta, stats = local_train(init_params(SPEC), fd.client(0), TrainConfig(learning_rate=0.0), SPEC)
    assert not delta.any()
    assert stats.n_examples == 40 and len(stats.epoch_losses) == 7


def test_single_full_batch_epoch_is_one_adam_step(fd):
    shard = fd.client(1)
    g0 = np.random.default_rng(1).normal(scale=0.1, size=SPEC.n_params)
    cfg = TrainConfig(epochs=1, batch_size=40, learning_rate=0.01)
    delta, _ = local_train(g0, shard, cfg, SPEC)
    x = featurize_examples(shard.examples, SPEC.hash_dimension)
    new, _ = adam_step(g0, gradient(g0, x, SPEC), AdamState.zeros(SPEC.n_params), cfg)
    np.testing.assert_allclose(g0 + delta, new, rtol=0, atol=1e-12)


def test_deterministic_and_seeded(fd):
    g = init_params(SPEC)
    a, _ = local_train(g, fd.client(2), TrainConfig(seed=4), SPEC)
    b, _ = local_train(g, fd.client(2), TrainConfig(seed=4), SPEC)
    c, _ = local_train(g, fd.client(2), TrainConfig(seed=5), SPEC)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("kind", ["logistic_regression", "one_hidden_layer"])
def test_loss_decreases(fd, kind):
    spec = ModelSpec(kind=kind, hash_dimension=256, hidden_units=8)
    _, stats = local_train(init_params(spec), fd.client(3), TrainConfig(learning_rate=0.01), spec)
    assert stats.epoch_losses[-1] < stats.epoch_losses[0] < np.log(2) + 1e-9


def test_hidden_dropout_runs(fd):
    spec = ModelSpec(kind="one_hidden_layer", hash_dimension=256, hidden_units=8, dropout=0.5)
    delta, _ = local_train(init_params(spec), fd.client(0), TrainConfig(epochs=2), spec)
    assert np.all(np.isfinite(delta)) and delta.any()


def test_divergence_reported_with_client_id(fd):
    g = np.full(SPEC.n_params, np.nan)
    with pytest.raises(TrainingError) as info:
        local_train(g, fd.client(4), TrainConfig(epochs=1), SPEC)
    assert info.value.client_id == 4
