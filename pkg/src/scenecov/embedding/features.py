"""Numeric feature extraction and view augmentation for actor graphs.

Node features (7): one-hot actor type (vehicle, pedestrian, cyclist,
motorcycle), standardized longitudinal speed, on_intersection flag,
changed_lane flag.

Edge features (7): one-hot edge type over six slots (following_lead,
leading_vehicle, neighbor_vehicle, opposite_vehicle, two reserved-zero
slots), then the standardized path length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..actor_graph import ActorGraph, RelationType
from ..errors import SceneCovError
from ..scene_model import ActorType

NODE_FEATURE_DIM = 7
EDGE_FEATURE_DIM = 7

SPEED_CHANNEL = 4  # node column carrying standardized speed
PATH_LENGTH_CHANNEL = 6  # edge column carrying standardized path length

_ACTOR_TYPE_SLOT = {
    ActorType.VEHICLE: 0,
    ActorType.PEDESTRIAN: 1,
    ActorType.CYCLIST: 2,
    ActorType.MOTORCYCLE: 3,
}

_RELATION_SLOT = {
    RelationType.FOLLOWING_LEAD: 0,
    RelationType.LEADING_VEHICLE: 1,
    RelationType.NEIGHBOR_VEHICLE: 2,
    RelationType.OPPOSITE_VEHICLE: 3,
    # slots 4 and 5 stay zero, reserved for future edge categories
}


@dataclass
class FeatureStats:
    """Mean/std of the continuous channels, fitted on a training corpus."""

    speed_mean: float = 0.0
    speed_std: float = 1.0
    path_mean: float = 0.0
    path_std: float = 1.0
    fitted: bool = False

    @classmethod
    def fit(cls, graphs: Sequence[ActorGraph]) -> "FeatureStats":
        speeds = [n.long_speed_mps for g in graphs for n in g.nodes]
        lengths = [e.path_length_m for g in graphs for e in g.edges]
        if not speeds:
            raise SceneCovError("cannot fit feature stats: no actors in corpus")

        def stats(values: list[float]) -> tuple[float, float]:
            arr = np.asarray(values, dtype=np.float64)
            if arr.size == 0:
                return 0.0, 1.0
            std = float(arr.std())
            return float(arr.mean()), std if std > 1e-12 else 1.0

        speed_mean, speed_std = stats(speeds)
        path_mean, path_std = stats(lengths)
        return cls(speed_mean, speed_std, path_mean, path_std, fitted=True)

    def to_dict(self) -> dict:
        return {
            "speed_mean": self.speed_mean,
            "speed_std": self.speed_std,
            "path_mean": self.path_mean,
            "path_std": self.path_std,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureStats":
        return cls(float(data["speed_mean"]), float(data["speed_std"]),
                   float(data["path_mean"]), float(data["path_std"]), fitted=True)


@dataclass
class FeaturizedGraph:
    """Dense feature matrices in canonical (actor-id sorted) order."""

    actor_ids: tuple[str, ...]
    node_features: np.ndarray  # (n, NODE_FEATURE_DIM)
    edge_index: np.ndarray  # (E, 2) int64, rows are (src, dst) node indices
    edge_features: np.ndarray  # (E, EDGE_FEATURE_DIM)

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_index.shape[0]

    def copy(self) -> "FeaturizedGraph":
        return FeaturizedGraph(self.actor_ids, self.node_features.copy(),
                               self.edge_index.copy(), self.edge_features.copy())


def featurize(graph: ActorGraph, stats: FeatureStats) -> FeaturizedGraph:
    """Build feature matrices for one graph.

    Nodes and edges are canonically ordered (actor id, then (src, dst,
    relation)) so that any permutation of the input produces bitwise
    identical matrices.
    """
    if not stats.fitted:
        raise SceneCovError("feature stats must be fitted before featurizing")
    nodes = graph.nodes  # already id-sorted
    index_of = {n.actor_id: i for i, n in enumerate(nodes)}
    node_features = np.zeros((len(nodes), NODE_FEATURE_DIM))
    for i, node in enumerate(nodes):
        node_features[i, _ACTOR_TYPE_SLOT[node.actor_type]] = 1.0
        node_features[i, SPEED_CHANNEL] = (node.long_speed_mps - stats.speed_mean) / stats.speed_std
        node_features[i, 5] = 1.0 if node.on_intersection else 0.0
        node_features[i, 6] = 1.0 if node.changed_lane else 0.0
    edges = sorted(graph.edges, key=lambda e: (e.src, e.dst, e.relation.value))
    edge_index = np.zeros((len(edges), 2), dtype=np.int64)
    edge_features = np.zeros((len(edges), EDGE_FEATURE_DIM))
    for j, edge in enumerate(edges):
        edge_index[j, 0] = index_of[edge.src]
        edge_index[j, 1] = index_of[edge.dst]
        edge_features[j, _RELATION_SLOT[edge.relation]] = 1.0
        edge_features[j, PATH_LENGTH_CHANNEL] = \
            (edge.path_length_m - stats.path_mean) / stats.path_std
    return FeaturizedGraph(tuple(n.actor_id for n in nodes), node_features,
                           edge_index, edge_features)


def augment(fg: FeaturizedGraph, rng: np.random.Generator,
            noise_sigma: float, edge_drop_p: float) -> FeaturizedGraph:
    """Produce one augmented view of a featurized graph.

    Draw order from the generator, in this exact sequence: Gaussian noise
    for the node speed channel (n draws), Gaussian noise for the edge path
    length channel (E draws), then one uniform per edge; an edge is dropped
    when its uniform is below edge_drop_p. The node set never changes.
    """
    out = fg.copy()
    node_noise = rng.normal(0.0, noise_sigma, out.n_nodes)
    edge_noise = rng.normal(0.0, noise_sigma, out.n_edges)
    keep = rng.random(out.n_edges) >= edge_drop_p
    out.node_features[:, SPEED_CHANNEL] += node_noise
    if out.n_edges:
        out.edge_features[:, PATH_LENGTH_CHANNEL] += edge_noise
        out.edge_index = out.edge_index[keep]
        out.edge_features = out.edge_features[keep]
    return out
