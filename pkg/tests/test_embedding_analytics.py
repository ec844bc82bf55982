"""Nearest neighbors, PCA via power iteration, density coverage."""

import numpy as np
import pytest

from scenecov.embedding_analytics import (
    EmbeddingMatrix,
    density_coverage,
    load_embeddings,
    nearest,
    pca,
    save_embeddings,
)
from scenecov.errors import SceneCovError


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def matrix_of(vectors, tag="ref"):
    n = vectors.shape[0]
    return EmbeddingMatrix(tuple(f"s{i}" for i in range(n)), tuple(tag for _ in range(n)),
                           vectors)


class TestNearest:
    def test_duplicate_row_is_top1(self):
        rng = np.random.default_rng(0)
        vectors = unit_rows(rng, 10, 8)
        vectors[7] = vectors[2]
        result = nearest(matrix_of(vectors), "s2", k=1)
        assert result.scene_ids == ("s7",)
        assert result.distances[0] == pytest.approx(0.0)

    def test_full_ranking(self):
        rng = np.random.default_rng(1)
        matrix = matrix_of(unit_rows(rng, 6, 4))
        result = nearest(matrix, "s0", k=5)
        assert len(result.scene_ids) == 5
        assert not result.truncated
        assert list(result.distances) == sorted(result.distances)

    def test_k_too_large_truncates(self):
        rng = np.random.default_rng(2)
        matrix = matrix_of(unit_rows(rng, 4, 4))
        result = nearest(matrix, "s0", k=10)
        assert result.truncated
        assert len(result.scene_ids) == 3

    def test_matches_brute_force_and_metric_equivalence(self):
        rng = np.random.default_rng(3)
        vectors = unit_rows(rng, 50, 16)
        matrix = matrix_of(vectors)
        for query in ("s0", "s17", "s49"):
            qi = matrix.scene_ids.index(query)
            dists = np.linalg.norm(vectors - vectors[qi], axis=1)
            order = [i for i in np.argsort(dists, kind="stable") if i != qi]
            expected = tuple(f"s{i}" for i in order)
            euclid = nearest(matrix, query, k=49, metric="euclidean")
            cosine = nearest(matrix, query, k=49, metric="cosine")
            assert euclid.scene_ids == expected
            assert cosine.scene_ids == expected

    def test_external_query_vector(self):
        rng = np.random.default_rng(4)
        matrix = matrix_of(unit_rows(rng, 5, 4))
        result = nearest(matrix, matrix.vectors[3], k=1)
        assert result.scene_ids == ("s3",)

    def test_roundtrip_file(self, tmp_path):
        rng = np.random.default_rng(5)
        matrix = matrix_of(unit_rows(rng, 8, 6))
        save_embeddings(matrix, tmp_path / "emb.csv")
        loaded = load_embeddings(tmp_path / "emb.csv")
        assert loaded.scene_ids == matrix.scene_ids
        np.testing.assert_array_equal(loaded.vectors, matrix.vectors)


class TestPca:
    def test_line_in_3d(self):
        rng = np.random.default_rng(0)
        t = rng.normal(size=100)
        direction = np.array([1.0, 2.0, -0.5])
        direction /= np.linalg.norm(direction)
        points = np.outer(t, direction) + np.array([3.0, -1.0, 0.5])
        result = pca(points, dims=1)
        assert result.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)
        assert abs(float(result.components[0] @ direction)) == pytest.approx(1.0, abs=1e-9)

    def test_matches_dense_eigendecomposition(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = rng.normal(size=(100, 8)) @ np.diag(rng.uniform(0.5, 3.0, 8))
            result = pca(x, dims=4)
            centered = x - x.mean(axis=0)
            eigval, eigvec = np.linalg.eigh(centered.T @ centered / (len(x) - 1))
            order = np.argsort(eigval)[::-1]
            for i in range(4):
                cos = abs(float(result.components[i] @ eigvec[:, order[i]]))
                assert cos > 0.999

    def test_isotropic_ratios_near_uniform(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(10000, 5))
        result = pca(x, dims=5)
        for ratio in result.explained_variance_ratio:
            assert ratio == pytest.approx(0.2, abs=0.05)

    def test_ratios_non_increasing_and_full_reconstruction(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(60, 6)) @ np.diag([3, 2.5, 2, 1.5, 1, 0.5])
        result = pca(x, dims=6)
        ratios = result.explained_variance_ratio
        assert all(ratios[i] >= ratios[i + 1] - 1e-12 for i in range(len(ratios) - 1))
        centered = x - result.mean
        reconstructed = result.projected @ result.components
        assert float(np.max(np.abs(reconstructed - centered))) < 1e-8

    def test_rank_deficient_flags(self):
        rng = np.random.default_rng(4)
        t = rng.normal(size=(50, 2))
        x = np.hstack([t, t @ np.array([[1.0, 0.0], [0.0, 1.0]])])  # rank 2 in 4-d
        result = pca(x, dims=4)
        assert result.rank_deficient
        assert result.components.shape[0] < 4

    def test_permutation_invariance_up_to_sign(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(40, 5)) @ np.diag([3, 2, 1.5, 1, 0.5])
        a = pca(x, dims=3)
        b = pca(x[rng.permutation(len(x))], dims=3)
        for i in range(3):
            assert abs(float(a.components[i] @ b.components[i])) > 0.9999

    def test_input_validation(self):
        rng = np.random.default_rng(6)
        with pytest.raises(SceneCovError):
            pca(rng.normal(size=(3, 4)), dims=5)
        with pytest.raises(SceneCovError):
            pca(rng.normal(size=(3, 4)), dims=3)


class TestDensityCoverage:
    def test_self_coverage_is_one(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 4))
        report = density_coverage(x, x, k_density=10)
        assert report.covered_fraction == 1.0

    def test_far_test_set_covers_nothing(self):
        rng = np.random.default_rng(1)
        ref = rng.normal(size=(50, 3))
        test = rng.normal(size=(50, 3)) + 100.0
        report = density_coverage(ref, test, k_density=5)
        assert report.covered_fraction == 0.0

    def test_two_cluster_half_coverage(self):
        covered = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            cluster_a = rng.normal(size=(150, 4)) * 0.5
            cluster_b = rng.normal(size=(150, 4)) * 0.5
            cluster_b[:, 0] += 12.0
            ref = np.vstack([cluster_a, cluster_b])
            test = rng.normal(size=(150, 4)) * 0.5  # only cluster A
            report = density_coverage(ref, test, k_density=10)
            covered.append(report.covered_fraction)
        assert float(np.mean(covered)) == pytest.approx(0.5, abs=0.05)

    def test_k_density_bounds(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(10, 3))
        with pytest.raises(SceneCovError):
            density_coverage(x, x, k_density=10)
        with pytest.raises(SceneCovError):
            density_coverage(x, x, k_density=0)

    def test_swapped_direction_runs(self):
        rng = np.random.default_rng(3)
        ref = rng.normal(size=(40, 3))
        test = rng.normal(size=(30, 3))
        forward = density_coverage(ref, test, k_density=5)
        backward = density_coverage(test, ref, k_density=5)
        assert 0.0 <= forward.covered_fraction <= 1.0
        assert 0.0 <= backward.covered_fraction <= 1.0
