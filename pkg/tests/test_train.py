"""Training loop behavior: schedule, reproducibility, checkpoints."""

import numpy as np
import pytest

from scenecov.embedding import EncoderConfig, load_checkpoint, save_checkpoint, train
from scenecov.embedding.train import learning_rate, total_epochs
from scenecov.errors import SceneCovError

from test_embedding import chain_graph, toy_config


def small_corpus(n=24, seed=0):
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(n):
        size = int(rng.integers(2, 6))
        speeds = [float(rng.uniform(1, 19)) for _ in range(size)]
        graphs.append(chain_graph(size, speeds=speeds))
    return graphs


class TestSchedule:
    def test_warmup_then_staged_decay(self):
        config = EncoderConfig()
        assert learning_rate(config, 0) == pytest.approx(0.0015 / 3)
        assert learning_rate(config, 2) == pytest.approx(0.0015)
        for stage in range(config.stages):
            assert learning_rate(config, config.warmup_epochs + stage) \
                == pytest.approx(0.0015 * 0.85 ** stage)

    def test_epochs_per_stage_knob(self):
        config = EncoderConfig(epochs_per_stage=2, stages=4, warmup_epochs=1)
        assert total_epochs(config) == 9
        assert learning_rate(config, 1) == learning_rate(config, 2)
        assert learning_rate(config, 3) == pytest.approx(config.lr0 * 0.85)

    def test_paper_defaults(self):
        config = EncoderConfig()
        assert (config.layers, config.hidden, config.embed_dim) == (5, 384, 192)
        assert config.temperature == 0.07
        assert config.noise_sigma == 0.08
        assert config.edge_drop_p == 0.1
        assert config.batch == 384
        assert (config.lr0, config.lr_decay, config.stages) == (0.0015, 0.85, 15)
        assert config.warmup_epochs == 3
        assert config.weight_decay == 5e-6


class TestTrain:
    def test_requires_two_graphs(self):
        with pytest.raises(SceneCovError):
            train(toy_config(), [chain_graph(3)])

    def test_history_shape_and_reproducibility(self):
        config = toy_config(stages=2, warmup_epochs=1, seed=7)
        graphs = small_corpus()
        first = train(config, graphs)
        second = train(config, graphs)
        assert len(first.history) == total_epochs(config)
        assert [h.train_loss for h in first.history] \
            == [h.train_loss for h in second.history]
        for key in first.params:
            np.testing.assert_array_equal(first.params[key], second.params[key])

    def test_validation_split_disjoint(self):
        config = toy_config(stages=1, warmup_epochs=0, seed=3)
        result = train(config, small_corpus(40))
        assert set(result.train_ids).isdisjoint(result.val_ids)
        assert len(result.val_ids) == 4
        assert all(h.val_loss is not None for h in result.history)

    def test_checkpoint_roundtrip(self, tmp_path):
        config = toy_config(stages=1, warmup_epochs=0)
        result = train(config, small_corpus(12))
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, result.config, result.feature_stats, result.params)
        loaded_config, loaded_stats, loaded_params = load_checkpoint(path)
        assert loaded_config == result.config
        assert loaded_stats.speed_mean == pytest.approx(result.feature_stats.speed_mean)
        for key in result.params:
            np.testing.assert_array_equal(loaded_params[key], result.params[key])

    def test_loss_decreases_on_easy_corpus(self):
        # two clearly different graph families; a few epochs must help
        rng = np.random.default_rng(5)
        graphs = []
        for _ in range(30):
            graphs.append(chain_graph(2, speeds=[float(rng.uniform(1, 5))] * 2))
            graphs.append(chain_graph(5, speeds=[float(rng.uniform(14, 19))] * 5))
        config = toy_config(stages=6, warmup_epochs=1, batch=12, seed=1,
                            lr0=0.01, val_fraction=0.0)
        result = train(config, graphs)
        assert result.history[-1].train_loss < result.history[0].train_loss
