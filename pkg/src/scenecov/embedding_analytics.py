"""Analyses over embedding matrices: similarity search, PCA projection,
and density-based coverage of a test distribution against a reference."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SceneCovError


@dataclass
class EmbeddingMatrix:
    """Per-scene embedding rows with their identifiers."""

    scene_ids: tuple[str, ...]
    source_tags: tuple[str, ...]
    vectors: np.ndarray  # (n, d) float64

    def __post_init__(self):
        if len(self.scene_ids) != self.vectors.shape[0] \
                or len(self.source_tags) != self.vectors.shape[0]:
            raise ValueError("ids, tags, and vectors must align")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row_for(self, scene_id: str) -> np.ndarray:
        try:
            return self.vectors[self.scene_ids.index(scene_id)]
        except ValueError:
            raise SceneCovError(f"scene {scene_id} not in embedding matrix") from None


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id", "source_tag"]
                        + [f"e{i}" for i in range(matrix.dim)])
        for scene_id, tag, row in zip(matrix.scene_ids, matrix.source_tags, matrix.vectors):
            writer.writerow([scene_id, tag] + [repr(float(x)) for x in row])


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["scene_id", "source_tag"]:
            raise SceneCovError(f"{path}: not an embedding file")
        ids, tags, rows = [], [], []
        for rec in reader:
            ids.append(rec[0])
            tags.append(rec[1])
            rows.append([float(x) for x in rec[2:]])
    if not rows:
        raise SceneCovError(f"{path}: empty embedding file")
    return EmbeddingMatrix(tuple(ids), tuple(tags), np.asarray(rows, dtype=np.float64))


@dataclass(frozen=True)
class NeighborResult:
    query_id: str
    scene_ids: tuple[str, ...]
    distances: tuple[float, ...]
    metric: str
    truncated: bool


def nearest(matrix: EmbeddingMatrix, query: str | np.ndarray, k: int,
            metric: str = "euclidean") -> NeighborResult:
    """k nearest corpus rows to the query, self excluded.

    The query is a scene id present in the matrix or an external vector.
    On unit-norm rows euclidean and cosine orderings coincide. Asking for
    k >= corpus size returns the full ranking with truncated=True.
    """
    if metric not in ("euclidean", "cosine"):
        raise SceneCovError(f"unknown metric {metric!r}")
    if k < 1:
        raise SceneCovError("k must be >= 1")
    if isinstance(query, str):
        query_vec = matrix.row_for(query)
        exclude = matrix.scene_ids.index(query)
        query_id = query
    else:
        query_vec = np.asarray(query, dtype=np.float64)
        exclude = None
        query_id = "<external>"
    if metric == "euclidean":
        dists = np.linalg.norm(matrix.vectors - query_vec, axis=1)
    else:
        qn = np.linalg.norm(query_vec)
        vn = np.linalg.norm(matrix.vectors, axis=1)
        denom = np.maximum(qn * vn, 1e-300)
        dists = 1.0 - (matrix.vectors @ query_vec) / denom
    order = [i for i in np.argsort(dists, kind="stable") if i != exclude]
    available = len(order)
    truncated = k > available
    top = order[:min(k, available)]
    return NeighborResult(
        query_id=query_id,
        scene_ids=tuple(matrix.scene_ids[i] for i in top),
        distances=tuple(float(dists[i]) for i in top),
        metric=metric,
        truncated=truncated,
    )


@dataclass
class PcaResult:
    components: np.ndarray  # (dims, d) principal axes, unit norm
    projected: np.ndarray  # (n, dims)
    explained_variance_ratio: tuple[float, ...]
    mean: np.ndarray
    rank_deficient: bool


def pca(vectors: np.ndarray, dims: int, max_iter: int = 10000,
        tol: float = 1e-12, seed: int = 0) -> PcaResult:
    """Principal axes of mean-centered data via power iteration + deflation.

    Stops early (rank_deficient=True) when a deflated eigenvalue is
    numerically zero. Each axis's sign is fixed so its largest-magnitude
    entry is positive. Ratios are eigenvalues over total variance, and are
    non-increasing.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise SceneCovError("vectors must be a 2-d array")
    n, d = x.shape
    if dims < 1 or dims > d:
        raise SceneCovError(f"dims must be in [1, {d}]")
    if n < dims + 1:
        raise SceneCovError("need at least dims + 1 points")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / max(n - 1, 1)
    total_var = float(np.trace(cov))
    rng = np.random.default_rng(seed)
    axes, eigenvalues = [], []
    deflated = cov.copy()
    rank_deficient = False
    for _ in range(dims):
        v = rng.normal(size=d)
        v /= np.linalg.norm(v)
        eigval = 0.0
        for _ in range(max_iter):
            w = deflated @ v
            norm = float(np.linalg.norm(w))
            if norm < 1e-300:
                eigval = 0.0
                break
            w /= norm
            if np.linalg.norm(w - v) < tol or np.linalg.norm(w + v) < tol:
                v = w
                eigval = float(v @ deflated @ v)
                break
            v = w
            eigval = norm
        eigval = max(float(v @ deflated @ v), 0.0)
        if total_var <= 0 or eigval <= max(1e-12 * total_var, 1e-300):
            rank_deficient = True
            break
        flip = np.argmax(np.abs(v))
        if v[flip] < 0:
            v = -v
        axes.append(v)
        eigenvalues.append(eigval)
        deflated = deflated - eigval * np.outer(v, v)
    if not axes:
        raise SceneCovError("data has no variance; PCA undefined")
    components = np.vstack(axes)
    ratios = tuple(ev / total_var for ev in eigenvalues)
    return PcaResult(components, centered @ components.T, ratios, mean, rank_deficient)


@dataclass
class DensityCoverageReport:
    """Per-reference-point density coverage of a test set."""

    densities: np.ndarray  # (n_ref,)
    knn_distances: np.ndarray  # (n_ref,) distance to the k-th neighbor
    relevant: np.ndarray  # (n_ref,) bool, above the density quantile
    covered: np.ndarray  # (n_ref,) bool, test point within the radius
    radius: float
    density_threshold: float

    @property
    def covered_fraction(self) -> float:
        n_rel = int(self.relevant.sum())
        if n_rel == 0:
            return 0.0
        return float((self.relevant & self.covered).sum() / n_rel)


def density_coverage(ref_vectors: np.ndarray, test_vectors: np.ndarray,
                     k_density: int = 10, density_quantile: float = 0.5,
                     radius_quantile: float = 0.9) -> DensityCoverageReport:
    """Check whether high-density reference regions contain test points.

    Local density of a reference point is the reciprocal of the distance to
    its k_density-th reference neighbor (self excluded). Points at or above
    the density_quantile of those densities are relevant; a relevant point
    counts as covered when some test point lies within the radius_quantile
    of all reference k-NN distances. Swap the arguments for the reverse
    direction.
    """
    ref = np.asarray(ref_vectors, dtype=np.float64)
    test = np.asarray(test_vectors, dtype=np.float64)
    if ref.ndim != 2 or test.ndim != 2 or ref.size == 0 or test.size == 0:
        raise SceneCovError("both embedding sets must be non-empty 2-d arrays")
    n_ref = ref.shape[0]
    if k_density < 1 or k_density >= n_ref:
        raise SceneCovError("k_density must be in [1, n_ref - 1]")
    diff = ref[:, None, :] - ref[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(dist, np.inf)
    knn = np.sort(dist, axis=1)[:, k_density - 1]
    densities = 1.0 / np.maximum(knn, 1e-300)
    threshold = float(np.quantile(densities, density_quantile))
    relevant = densities >= threshold
    radius = float(np.quantile(knn, radius_quantile))
    cross = ref[:, None, :] - test[None, :, :]
    nearest_test = np.sqrt(np.sum(cross * cross, axis=2)).min(axis=1)
    covered = nearest_test <= radius
    return DensityCoverageReport(densities, knn, relevant, covered, radius, threshold)
