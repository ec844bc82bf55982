"""Feature extraction, GINE forward/backward, and the contrastive loss."""

import math

import numpy as np
import pytest

from scenecov.actor_graph import ActorGraph, RelationType
from scenecov.embedding import (
    EncoderConfig,
    FeatureStats,
    augment,
    encode,
    featurize,
    init_params,
    nt_xent_loss,
)
from scenecov.embedding.features import PATH_LENGTH_CHANNEL, SPEED_CHANNEL
from scenecov.embedding.gine import encode_backward, zero_grads
from scenecov.errors import SceneCovError

from test_archetypes import lead_pair, make_node


def toy_config(**overrides):
    base = dict(layers=2, hidden=8, embed_dim=8, projection_dim=4, batch=4,
                stages=2, warmup_epochs=1)
    base.update(overrides)
    return EncoderConfig(**base)


def chain_graph(n=3, speeds=None, changed=None):
    nodes = [make_node(f"a{i}", speed=(speeds or [10.0] * n)[i],
                       changed=(changed or [False] * n)[i]) for i in range(n)]
    graph = ActorGraph(nodes)
    for i in range(n - 1):
        lead_pair(graph, f"a{i}", f"a{i + 1}", d=20.0 + i)
    return graph


def fitted_stats():
    return FeatureStats(speed_mean=10.0, speed_std=4.0, path_mean=20.0,
                        path_std=10.0, fitted=True)


class TestFeaturize:
    def test_stationary_vehicle_vector(self):
        graph = ActorGraph([make_node("a", speed=0.0)])
        stats = FeatureStats(speed_mean=0.0, speed_std=1.0, path_mean=0.0,
                             path_std=1.0, fitted=True)
        fg = featurize(graph, stats)
        assert fg.node_features.tolist() == [[1, 0, 0, 0, 0, 0, 0]]

    def test_unfitted_stats_error(self):
        with pytest.raises(SceneCovError):
            featurize(chain_graph(), FeatureStats())

    def test_zero_edge_graph(self):
        graph = ActorGraph([make_node("a"), make_node("b")])
        fg = featurize(graph, fitted_stats())
        assert fg.edge_index.shape == (0, 2)
        assert fg.edge_features.shape[0] == 0

    def test_known_matrices(self):
        graph = chain_graph(3, speeds=[6.0, 10.0, 14.0], changed=[False, True, False])
        fg = featurize(graph, fitted_stats())
        assert fg.actor_ids == ("a0", "a1", "a2")
        # hand-standardized speeds: (6-10)/4, 0, +1
        np.testing.assert_allclose(fg.node_features[:, SPEED_CHANNEL], [-1.0, 0.0, 1.0])
        assert fg.node_features[1, 6] == 1.0
        # edges in (src, dst, relation) order; each lead pair contributes
        # one following_lead and one leading_vehicle edge
        assert fg.edge_features.shape == (4, 7)
        assert fg.edge_features[:, :6].sum(axis=1).tolist() == [1.0] * 4
        # a0->a1 leading edge: standardized +20 -> 0.0
        row = fg.edge_features[(fg.edge_index[:, 0] == 0)
                               & (fg.edge_index[:, 1] == 1)][0]
        assert row[PATH_LENGTH_CHANNEL] == pytest.approx(0.0)

    def test_reserved_edge_slots_zero(self):
        fg = featurize(chain_graph(), fitted_stats())
        assert np.all(fg.edge_features[:, 4] == 0)
        assert np.all(fg.edge_features[:, 5] == 0)

    def test_fit_guards_zero_std(self):
        graph = ActorGraph([make_node("a", speed=5.0), make_node("b", speed=5.0)])
        stats = FeatureStats.fit([graph])
        assert stats.speed_std == 1.0


class TestAugment:
    def test_identity_when_disabled(self):
        fg = featurize(chain_graph(), fitted_stats())
        out = augment(fg, np.random.default_rng(0), 0.0, 0.0)
        np.testing.assert_array_equal(out.node_features, fg.node_features)
        np.testing.assert_array_equal(out.edge_features, fg.edge_features)
        assert out.n_edges == fg.n_edges

    def test_drop_all_edges(self):
        fg = featurize(chain_graph(4), fitted_stats())
        out = augment(fg, np.random.default_rng(0), 0.0, 1.0)
        assert out.n_edges == 0
        assert out.n_nodes == fg.n_nodes

    def test_seeded_keep_mask(self):
        # documented draw order: node noise, edge noise, then edge uniforms
        fg = featurize(chain_graph(6), fitted_stats())
        assert fg.n_edges == 10
        seed, p = 42, 0.4
        rng = np.random.default_rng(seed)
        rng.normal(0.0, 0.08, fg.n_nodes)
        rng.normal(0.0, 0.08, fg.n_edges)
        expected_keep = rng.random(fg.n_edges) >= p
        out = augment(fg, np.random.default_rng(seed), 0.08, p)
        assert out.n_edges == int(expected_keep.sum())
        np.testing.assert_array_equal(out.edge_index, fg.edge_index[expected_keep])

    def test_only_continuous_channels_perturbed(self):
        fg = featurize(chain_graph(4), fitted_stats())
        out = augment(fg, np.random.default_rng(7), 0.5, 0.0)
        np.testing.assert_array_equal(
            np.delete(out.node_features, SPEED_CHANNEL, axis=1),
            np.delete(fg.node_features, SPEED_CHANNEL, axis=1))
        np.testing.assert_array_equal(
            np.delete(out.edge_features, PATH_LENGTH_CHANNEL, axis=1),
            np.delete(fg.edge_features, PATH_LENGTH_CHANNEL, axis=1))


class TestEncode:
    def test_zero_params_constant_unit_embedding(self):
        config = toy_config()
        params = {k: np.zeros_like(v)
                  for k, v in init_params(config, np.random.default_rng(0)).items()}
        stats = fitted_stats()
        e1, _, _ = encode(params, config, featurize(chain_graph(2), stats))
        e2, _, _ = encode(params, config, featurize(chain_graph(5), stats))
        np.testing.assert_array_equal(e1, e2)
        assert np.linalg.norm(e1) == pytest.approx(1.0)

    def test_single_node_pooling_segments_agree(self):
        config = toy_config()
        params = init_params(config, np.random.default_rng(1))
        graph = ActorGraph([make_node("a", speed=7.0)])
        _, _, tape = encode(params, config, featurize(graph, fitted_stats()))
        h = config.hidden
        np.testing.assert_allclose(tape.readout[:h], tape.readout[h:2 * h])
        np.testing.assert_allclose(tape.readout[:h], tape.readout[2 * h:])

    def test_hand_computed_forward(self):
        # 1 layer, hidden 2: run the update by hand for a 2-node graph
        config = EncoderConfig(layers=1, hidden=2, embed_dim=2, projection_dim=2,
                               batch=4, stages=1, warmup_epochs=0)
        params = init_params(config, np.random.default_rng(3))
        graph = ActorGraph([make_node("a", speed=6.0), make_node("b", speed=14.0)])
        graph.add_edge("a", "b", RelationType.LEADING_VEHICLE, 25.0)
        graph.add_edge("b", "a", RelationType.FOLLOWING_LEAD, -25.0)
        fg = featurize(graph, fitted_stats())
        embedding, projection, _ = encode(params, config, fg)

        x = fg.node_features
        s = x[fg.edge_index[:, 0]] + fg.edge_features @ params["layer0.edge_w"].T \
            + params["layer0.edge_b"]
        m = np.maximum(s, 0.0)
        agg = np.zeros_like(x)
        for e, (_, dst) in enumerate(fg.edge_index):
            agg[dst] += m[e]
        z = x + agg  # eps starts at 0
        h = np.maximum(z @ params["layer0.w1"].T + params["layer0.b1"], 0.0) \
            @ params["layer0.w2"].T + params["layer0.b2"]
        readout = np.concatenate([h.mean(0), h.max(0), h.sum(0)])
        raw = params["embed.w2"] @ np.maximum(
            params["embed.w1"] @ readout + params["embed.b1"], 0.0) + params["embed.b2"]
        expected_embed = raw / np.linalg.norm(raw)
        np.testing.assert_allclose(embedding, expected_embed, atol=1e-12)
        expected_proj = params["proj.w2"] @ np.maximum(
            params["proj.w1"] @ expected_embed + params["proj.b1"], 0.0) + params["proj.b2"]
        np.testing.assert_allclose(projection, expected_proj, atol=1e-12)

    def test_empty_graph_rejected(self):
        config = toy_config()
        params = init_params(config, np.random.default_rng(0))
        graph = ActorGraph([])
        with pytest.raises(SceneCovError):
            encode(params, config, featurize(graph, fitted_stats()))

    def test_permutation_invariance_exact(self):
        # same actors presented in any order produce bitwise-equal output
        config = toy_config()
        params = init_params(config, np.random.default_rng(5))
        rng = np.random.default_rng(9)
        nodes = [make_node(f"a{i}", speed=float(rng.uniform(1, 19))) for i in range(5)]
        graph1 = ActorGraph(nodes)
        graph2 = ActorGraph(list(reversed(nodes)))
        for g in (graph1, graph2):
            lead_pair(g, "a0", "a1", 18.0)
            lead_pair(g, "a1", "a2", 23.0)
            g.add_edge("a3", "a4", RelationType.OPPOSITE_VEHICLE, 12.0)
            g.add_edge("a4", "a3", RelationType.OPPOSITE_VEHICLE, 12.0)
        stats = fitted_stats()
        e1, p1, _ = encode(params, config, featurize(graph1, stats))
        e2, p2, _ = encode(params, config, featurize(graph2, stats))
        np.testing.assert_array_equal(e1, e2)
        np.testing.assert_array_equal(p1, p2)

    def test_embedding_unit_norm(self):
        config = toy_config()
        params = init_params(config, np.random.default_rng(8))
        rng = np.random.default_rng(10)
        for n in (1, 2, 5, 8):
            speeds = [float(rng.uniform(0, 20)) for _ in range(n)]
            e, _, _ = encode(params, config,
                             featurize(chain_graph(n, speeds=speeds), fitted_stats()))
            assert np.linalg.norm(e) == pytest.approx(1.0, abs=1e-6)


class TestNtXent:
    def test_identical_projections_ln3(self):
        p = np.tile(np.array([0.3, -0.7, 0.2]), (4, 1))
        loss, _ = nt_xent_loss(p, 0.07)
        assert loss == pytest.approx(math.log(3.0), abs=1e-9)

    def test_large_temperature_limit(self):
        rng = np.random.default_rng(0)
        n = 6
        p = rng.normal(size=(2 * n, 8))
        loss, _ = nt_xent_loss(p, 1e6)
        assert loss == pytest.approx(math.log(2 * n - 1), abs=1e-4)

    def test_needs_two_graphs(self):
        with pytest.raises(SceneCovError):
            nt_xent_loss(np.ones((2, 4)), 0.07)

    def test_pair_permutation_invariance(self):
        rng = np.random.default_rng(4)
        n = 5
        p = rng.normal(size=(2 * n, 6))
        loss, _ = nt_xent_loss(p, 0.07)
        perm = rng.permutation(n)
        reordered = np.vstack([p[:n][perm], p[n:][perm]])
        loss_perm, _ = nt_xent_loss(reordered, 0.07)
        assert loss_perm == pytest.approx(loss, abs=1e-9)

    def test_disabled_augmentation_still_trainable(self):
        # sigma=0, p=0: both views identical, loss and gradients stay finite
        config = toy_config()
        params = init_params(config, np.random.default_rng(6))
        stats = fitted_stats()
        views = []
        for size in (2, 3, 4):
            fg = featurize(chain_graph(size), stats)
            views.append(augment(fg, np.random.default_rng(0), 0.0, 0.0))
        embeddings = []
        projections = []
        for view in views + views:  # two identical views per graph
            e, p, _ = encode(params, config, view)
            embeddings.append(e)
            projections.append(p)
        for i in range(3):
            np.testing.assert_array_equal(embeddings[i], embeddings[i + 3])
        loss, grad = nt_xent_loss(np.vstack(projections), config.temperature)
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        n = 3
        p = rng.normal(size=(2 * n, 5))
        tau = 0.2
        loss, grad = nt_xent_loss(p, tau)
        step = 1e-6
        for i in range(2 * n):
            for j in range(5):
                bump = p.copy()
                bump[i, j] += step
                up, _ = nt_xent_loss(bump, tau)
                bump[i, j] -= 2 * step
                down, _ = nt_xent_loss(bump, tau)
                numeric = (up - down) / (2 * step)
                assert grad[i, j] == pytest.approx(numeric, rel=1e-6, abs=1e-9)


def full_pipeline_loss(params, config, views):
    projections = []
    tapes = []
    for view in views:
        _, proj, tape = encode(params, config, view)
        projections.append(proj)
        tapes.append(tape)
    loss, d_proj = nt_xent_loss(np.vstack(projections), config.temperature)
    return loss, d_proj, tapes


class TestBackward:
    def test_gradients_match_finite_differences(self):
        config = toy_config()
        rng = np.random.default_rng(21)
        params = init_params(config, rng)
        stats = fitted_stats()
        graphs = [chain_graph(3, speeds=[5.0, 11.0, 16.0]),
                  chain_graph(2, speeds=[8.0, 9.0]),
                  chain_graph(4, speeds=[3.0, 6.0, 12.0, 18.0],
                              changed=[False, True, False, True]),
                  chain_graph(1, speeds=[14.0])]
        views = [featurize(g, stats) for g in graphs] * 2
        loss, d_proj, tapes = full_pipeline_loss(params, config, views)
        grads = zero_grads(params)
        for i, tape in enumerate(tapes):
            encode_backward(params, config, tape, d_proj[i], grads)

        step = 1e-5
        rng_probe = np.random.default_rng(33)
        for key in sorted(params):
            flat = params[key].reshape(-1)
            n_probe = min(flat.size, 6)
            for idx in rng_probe.choice(flat.size, size=n_probe, replace=False):
                original = flat[idx]
                flat[idx] = original + step
                up, _, _ = full_pipeline_loss(params, config, views)
                flat[idx] = original - step
                down, _, _ = full_pipeline_loss(params, config, views)
                flat[idx] = original
                numeric = (up - down) / (2 * step)
                analytic = grads[key].reshape(-1)[idx]
                assert analytic == pytest.approx(numeric, rel=2e-4, abs=1e-8), key

    def test_zero_projection_gradient_gives_zero_param_gradients(self):
        config = toy_config()
        params = init_params(config, np.random.default_rng(2))
        fg = featurize(chain_graph(3), fitted_stats())
        _, _, tape = encode(params, config, fg)
        grads = zero_grads(params)
        encode_backward(params, config, tape, np.zeros(config.projection_dim), grads)
        for key, g in grads.items():
            np.testing.assert_array_equal(g, np.zeros_like(g))

    def test_normalize_gradient_orthogonal_at_unit_input(self):
        # d/dx (x/|x|) applied to any upstream gradient is orthogonal to x
        # when |x| = 1; check via the embedding path with a linear probe
        from scenecov.embedding.gine import safe_normalize
        rng = np.random.default_rng(3)
        x = rng.normal(size=6)
        x /= np.linalg.norm(x)
        e, norm = safe_normalize(x)
        d_e = rng.normal(size=6)
        d_raw = (d_e - e * float(e @ d_e)) / norm
        assert abs(float(d_raw @ x)) < 1e-12
