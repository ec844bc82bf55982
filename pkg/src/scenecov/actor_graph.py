"""Actor relation graphs: discovery of candidate relations, then
hierarchical edge insertion with BFS redundancy prevention.

Phase 1 (discover_relations) finds, for every actor pair, the closest lane
path of each admissible pattern and keeps it when it passes both the
lane-based and the Euclidean distance limit. Phase 2 (build_actor_graph)
inserts edges stage by stage (lead, neighbor, opposite) and rejects a
relation when the graph already connects the pair within a small number of
edges.
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SceneCovError, SceneFormatError
from .lane_map import LaneMapGraph, LanePath, PathPattern, iter_pattern_paths, path_length_between
from .scene_model import ActorState, ActorType, Scene, SceneSet


class RelationType(enum.Enum):
    FOLLOWING_LEAD = "following_lead"
    LEADING_VEHICLE = "leading_vehicle"
    NEIGHBOR_VEHICLE = "neighbor_vehicle"
    OPPOSITE_VEHICLE = "opposite_vehicle"


class RelationKind(enum.Enum):
    LEAD = "lead"
    NEIGHBOR = "neighbor"
    OPPOSITE = "opposite"

    @property
    def pattern(self) -> PathPattern:
        return {
            RelationKind.LEAD: PathPattern.ALL_FOLLOWING,
            RelationKind.NEIGHBOR: PathPattern.EXACTLY_ONE_NEIGHBOR,
            RelationKind.OPPOSITE: PathPattern.EXACTLY_ONE_OPPOSITE,
        }[self]


@dataclass(frozen=True)
class ConstructionParams:
    """Tunable limits for discovery and hierarchical construction.

    Distance limits bound both the lane-based path length and the Euclidean
    distance between a pair; node distance limits bound the BFS edge count
    used for redundancy rejection.
    """

    max_distance_lead_veh_m: float = 100.0
    max_distance_neighbor_forward_m: float = 50.0
    max_distance_neighbor_backward_m: float = 50.0
    max_distance_opposite_forward_m: float = 100.0
    max_distance_opposite_backward_m: float = 10.0
    max_node_distance_leading: int = 3
    max_node_distance_neighbor: int = 2
    max_node_distance_opposite: int = 2
    delta_timestep_s: float = 1.0

    def __post_init__(self):
        for name in ("max_distance_lead_veh_m", "max_distance_neighbor_forward_m",
                     "max_distance_neighbor_backward_m", "max_distance_opposite_forward_m",
                     "max_distance_opposite_backward_m", "delta_timestep_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_node_distance_leading", "max_node_distance_neighbor",
                     "max_node_distance_opposite"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def limit_for(self, kind: RelationKind, path_length_m: float) -> float:
        """Distance limit for a relation kind given the sign of its length."""
        if kind is RelationKind.LEAD:
            return self.max_distance_lead_veh_m
        if kind is RelationKind.NEIGHBOR:
            return (self.max_distance_neighbor_forward_m if path_length_m >= 0
                    else self.max_distance_neighbor_backward_m)
        return (self.max_distance_opposite_forward_m if path_length_m >= 0
                else self.max_distance_opposite_backward_m)

    def max_limit(self, kind: RelationKind) -> float:
        if kind is RelationKind.LEAD:
            return self.max_distance_lead_veh_m
        if kind is RelationKind.NEIGHBOR:
            return max(self.max_distance_neighbor_forward_m,
                       self.max_distance_neighbor_backward_m)
        return max(self.max_distance_opposite_forward_m,
                   self.max_distance_opposite_backward_m)

    def node_distance(self, kind: RelationKind) -> int:
        return {
            RelationKind.LEAD: self.max_node_distance_leading,
            RelationKind.NEIGHBOR: self.max_node_distance_neighbor,
            RelationKind.OPPOSITE: self.max_node_distance_opposite,
        }[kind]

    def to_dict(self) -> dict:
        return {
            "max_distance_lead_veh_m": self.max_distance_lead_veh_m,
            "max_distance_neighbor_forward_m": self.max_distance_neighbor_forward_m,
            "max_distance_neighbor_backward_m": self.max_distance_neighbor_backward_m,
            "max_distance_opposite_forward_m": self.max_distance_opposite_forward_m,
            "max_distance_opposite_backward_m": self.max_distance_opposite_backward_m,
            "max_node_distance_leading": self.max_node_distance_leading,
            "max_node_distance_neighbor": self.max_node_distance_neighbor,
            "max_node_distance_opposite": self.max_node_distance_opposite,
            "delta_timestep_s": self.delta_timestep_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConstructionParams":
        known = set(cls().to_dict())
        unknown = set(data) - known
        if unknown:
            raise SceneCovError(f"unknown construction parameters: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class DiscoveredRelation:
    """A candidate relation between two actors, canonically oriented.

    actor_a orders before actor_b; path_length_m is the signed distance from
    actor_a to actor_b (positive when b lies ahead of a). For opposite
    relations the sign is mutual: both actors see the same value.
    """

    actor_a: str
    actor_b: str
    kind: RelationKind
    path_length_m: float
    lane_path: LanePath
    path_starts_at_a: bool = True

    def __post_init__(self):
        if not self.lane_path.matches(self.kind.pattern):
            raise ValueError("lane path does not match relation kind")


@dataclass(frozen=True)
class ActorNode:
    """Graph node: the actor attributes downstream consumers need."""

    actor_id: str
    actor_type: ActorType
    long_speed_mps: float
    on_intersection: bool
    changed_lane: bool
    primary_lane: int
    s_m: float
    position: tuple[float, float, float]


@dataclass(frozen=True)
class ActorEdge:
    src: str
    dst: str
    relation: RelationType
    path_length_m: float


class ActorGraph:
    """Directed multigraph of actors with typed, length-attributed edges."""

    def __init__(self, nodes: Iterable[ActorNode]):
        self.nodes: tuple[ActorNode, ...] = tuple(sorted(nodes, key=lambda n: n.actor_id))
        ids = [n.actor_id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate actor ids in graph")
        self._by_id = {n.actor_id: n for n in self.nodes}
        self.edges: list[ActorEdge] = []
        self._adj: dict[str, list[ActorEdge]] = {n.actor_id: [] for n in self.nodes}
        self._edge_keys: set[tuple[str, str, RelationType]] = set()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node(self, actor_id: str) -> ActorNode:
        return self._by_id[actor_id]

    def has_node(self, actor_id: str) -> bool:
        return actor_id in self._by_id

    def add_edge(self, src: str, dst: str, relation: RelationType, path_length_m: float) -> None:
        if src not in self._by_id or dst not in self._by_id:
            raise ValueError(f"edge endpoint missing from graph: {src}->{dst}")
        key = (src, dst, relation)
        if key in self._edge_keys:
            raise ValueError(f"duplicate edge {src}->{dst} {relation.value}")
        edge = ActorEdge(src, dst, relation, path_length_m)
        self._edge_keys.add(key)
        self.edges.append(edge)
        self._adj[src].append(edge)

    def has_edge(self, src: str, dst: str, relation: RelationType | None = None) -> bool:
        if relation is not None:
            return (src, dst, relation) in self._edge_keys
        return any(e.dst == dst for e in self._adj[src])

    def out_edges(self, actor_id: str) -> list[ActorEdge]:
        return self._adj[actor_id]

    def bfs_hops(self, src: str, dst: str, max_hops: int) -> int | None:
        """Edge count of the shortest directed path src->dst, or None if it
        exceeds max_hops. Edge types are ignored; edges are counted, not nodes."""
        if src == dst:
            return 0
        seen = {src}
        frontier = deque([(src, 0)])
        while frontier:
            current, hops = frontier.popleft()
            if hops >= max_hops:
                continue
            for edge in self._adj[current]:
                if edge.dst == dst:
                    return hops + 1
                if edge.dst not in seen:
                    seen.add(edge.dst)
                    frontier.append((edge.dst, hops + 1))
        return None

    def weakly_connected_component(self, actor_id: str) -> frozenset[str]:
        undirected: dict[str, set[str]] = {n.actor_id: set() for n in self.nodes}
        for e in self.edges:
            undirected[e.src].add(e.dst)
            undirected[e.dst].add(e.src)
        seen = {actor_id}
        stack = [actor_id]
        while stack:
            for other in undirected[stack.pop()]:
                if other not in seen:
                    seen.add(other)
                    stack.append(other)
        return frozenset(seen)


def euclidean_distance(a: ActorState, b: ActorState) -> float:
    return math.dist(a.position, b.position)


def _candidate_distances(map_graph: LaneMapGraph, kind: RelationKind,
                         a: ActorState, b: ActorState,
                         budget: float) -> list[tuple[float, int, tuple[int, ...], LanePath, bool]]:
    """All signed a->b distances for pattern paths in either direction.

    Search in both lane directions: a path found from b's lane yields the
    a->b distance by negation for lead and neighbor relations (antisymmetric
    sign) and unchanged for opposite relations (mutual sign). Each entry is
    a sort key (|d|, sign rank, lane sequence) plus the path and its origin.
    """
    pattern = kind.pattern
    out = []
    for path in iter_pattern_paths(map_graph, a.primary_lane, b.primary_lane, pattern, budget):
        d = path_length_between(map_graph, path, a.s_m, b.s_m)
        out.append((abs(d), 0 if d >= 0 else 1, path.lane_ids, path, True, d))
    if a.primary_lane != b.primary_lane:
        for path in iter_pattern_paths(map_graph, b.primary_lane, a.primary_lane, pattern, budget):
            d_ba = path_length_between(map_graph, path, b.s_m, a.s_m)
            d = d_ba if kind is RelationKind.OPPOSITE else -d_ba
            out.append((abs(d), 0 if d >= 0 else 1, path.lane_ids, path, False, d))
    return out


def discover_relations(map_graph: LaneMapGraph, scene: Scene,
                       params: ConstructionParams) -> list[DiscoveredRelation]:
    """Phase 1: enumerate candidate relations for every unordered actor pair.

    For each pair and relation kind, the pattern path minimizing the absolute
    signed distance defines the relation; it is kept iff both that distance
    and the Euclidean distance stay within the kind's limit, where forward
    or backward limits apply according to the sign. The path search horizon
    is the kind's largest limit plus both endpoint lane lengths.
    """
    actors = sorted(scene.actors, key=lambda x: x.actor_id)
    for actor in actors:
        map_graph.lane(actor.primary_lane)
    relations: list[DiscoveredRelation] = []
    for i, a in enumerate(actors):
        for b in actors[i + 1:]:
            euclid = euclidean_distance(a, b)
            for kind in (RelationKind.LEAD, RelationKind.NEIGHBOR, RelationKind.OPPOSITE):
                max_limit = params.max_limit(kind)
                if euclid > max_limit:
                    continue
                budget = (max_limit
                          + map_graph.lane(a.primary_lane).length_m
                          + map_graph.lane(b.primary_lane).length_m)
                candidates = _candidate_distances(map_graph, kind, a, b, budget)
                if not candidates:
                    continue
                best = min(candidates, key=lambda c: (c[0], c[1], c[2]))
                d = best[5]
                limit = params.limit_for(kind, d)
                if abs(d) <= limit and euclid <= limit:
                    relations.append(DiscoveredRelation(
                        actor_a=a.actor_id, actor_b=b.actor_id, kind=kind,
                        path_length_m=d, lane_path=best[3], path_starts_at_a=best[4]))
    relations.sort(key=lambda r: (r.actor_a, r.actor_b, r.kind.value))
    return relations


def _node_for(map_graph: LaneMapGraph, actor: ActorState) -> ActorNode:
    lane = map_graph.lane(actor.primary_lane)
    return ActorNode(
        actor_id=actor.actor_id,
        actor_type=actor.actor_type,
        long_speed_mps=actor.long_speed_mps,
        on_intersection=lane.is_intersection,
        changed_lane=actor.changed_lane,
        primary_lane=actor.primary_lane,
        s_m=actor.s_m,
        position=actor.position,
    )


def build_actor_graph(map_graph: LaneMapGraph, relations: Sequence[DiscoveredRelation],
                      scene: Scene, params: ConstructionParams) -> ActorGraph:
    """Phase 2: hierarchical edge insertion with redundancy prevention.

    Stages run lead -> neighbor -> opposite, each sorted by absolute path
    length (ties by actor ids). Before an edge is added, a BFS on the
    current graph rejects it when an existing path of at most
    max_node_distance edges already connects the endpoints. Lead and
    neighbor directions are checked independently; for opposite relations an
    existing path in either direction rejects both edges. The graph is
    updated immediately after each accepted edge.
    """
    graph = ActorGraph(_node_for(map_graph, a) for a in scene.actors)
    staged: dict[RelationKind, list[DiscoveredRelation]] = {k: [] for k in RelationKind}
    for rel in relations:
        staged[rel.kind].append(rel)
    for kind in (RelationKind.LEAD, RelationKind.NEIGHBOR, RelationKind.OPPOSITE):
        batch = sorted(staged[kind],
                       key=lambda r: (abs(r.path_length_m), r.actor_a, r.actor_b))
        max_hops = params.node_distance(kind)
        for rel in batch:
            d = rel.path_length_m
            if kind is RelationKind.LEAD:
                # positive d: actor_b leads actor_a
                follower, leader = (rel.actor_a, rel.actor_b) if d >= 0 else (rel.actor_b, rel.actor_a)
                gap = abs(d)
                if graph.bfs_hops(follower, leader, max_hops) is None:
                    graph.add_edge(follower, leader, RelationType.LEADING_VEHICLE, gap)
                if graph.bfs_hops(leader, follower, max_hops) is None:
                    graph.add_edge(leader, follower, RelationType.FOLLOWING_LEAD, -gap)
            elif kind is RelationKind.NEIGHBOR:
                if graph.bfs_hops(rel.actor_a, rel.actor_b, max_hops) is None:
                    graph.add_edge(rel.actor_a, rel.actor_b, RelationType.NEIGHBOR_VEHICLE, d)
                if graph.bfs_hops(rel.actor_b, rel.actor_a, max_hops) is None:
                    graph.add_edge(rel.actor_b, rel.actor_a, RelationType.NEIGHBOR_VEHICLE, -d)
            else:
                blocked = (graph.bfs_hops(rel.actor_a, rel.actor_b, max_hops) is not None
                           or graph.bfs_hops(rel.actor_b, rel.actor_a, max_hops) is not None)
                if not blocked:
                    graph.add_edge(rel.actor_a, rel.actor_b, RelationType.OPPOSITE_VEHICLE, d)
                    graph.add_edge(rel.actor_b, rel.actor_a, RelationType.OPPOSITE_VEHICLE, d)
    return graph


@dataclass
class SceneGraphResult:
    scene_id: str
    graph: ActorGraph | None
    warnings: tuple[str, ...] = ()
    error: str | None = None
    relations_discovered: int = 0

    @property
    def edges_discovered(self) -> int:
        return 2 * self.relations_discovered

    @property
    def edges_final(self) -> int:
        return self.graph.n_edges if self.graph is not None else 0


def build_scene_graph(map_graph: LaneMapGraph, scene: Scene,
                      params: ConstructionParams) -> SceneGraphResult:
    """Run both phases for one scene, tolerating bad actor records.

    Actors referencing unknown lanes or out-of-range stations are dropped
    with a warning rather than failing the scene.
    """
    warnings: list[str] = []
    usable: list[ActorState] = []
    for actor in scene.actors:
        if actor.primary_lane not in map_graph.lanes:
            warnings.append(f"actor {actor.actor_id}: unknown lane {actor.primary_lane}, dropped")
            continue
        lane = map_graph.lane(actor.primary_lane)
        if not (0.0 <= actor.s_m <= lane.length_m + 1e-9):
            warnings.append(f"actor {actor.actor_id}: s_m {actor.s_m} outside lane "
                            f"{actor.primary_lane}, dropped")
            continue
        usable.append(actor)
    clean = Scene(scene.scene_id, scene.map_ref, scene.timestep_s, tuple(usable),
                  scene.source_tag)
    if clean.is_degenerate:
        if len(scene.actors) >= 2:
            warnings.append("scene degenerate after dropping actors")
        graph = ActorGraph(_node_for(map_graph, a) for a in usable)
        return SceneGraphResult(scene.scene_id, graph, tuple(warnings), None, 0)
    relations = discover_relations(map_graph, clean, params)
    graph = build_actor_graph(map_graph, relations, clean, params)
    return SceneGraphResult(scene.scene_id, graph, tuple(warnings), None, len(relations))


def build_scene_graphs(map_graph: LaneMapGraph, scene_set: SceneSet,
                       params: ConstructionParams, jobs: int = 1) -> list[SceneGraphResult]:
    """Batch driver: one result per scene, order preserved.

    Per-scene failures become error records; the batch continues. Scenes are
    independent, so jobs > 1 fans them out over a thread pool.
    """
    if not scene_set.scenes:
        raise SceneCovError("scene set is empty")

    def run(scene: Scene) -> SceneGraphResult:
        try:
            return build_scene_graph(map_graph, scene, params)
        except SceneCovError as exc:
            return SceneGraphResult(scene.scene_id, None, (), str(exc), 0)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, scene_set.scenes))
    return [run(scene) for scene in scene_set.scenes]


# -- graph interchange format ----------------------------------------------

def graph_to_dict(result: SceneGraphResult, scene: Scene) -> dict:
    graph = result.graph
    return {
        "scene_id": scene.scene_id,
        "map_ref": scene.map_ref,
        "source_tag": scene.source_tag,
        "error": result.error,
        "warnings": list(result.warnings),
        "stats": {
            "relations_discovered": result.relations_discovered,
            "edges_discovered": result.edges_discovered,
            "edges_final": result.edges_final,
        },
        "nodes": [] if graph is None else [
            {
                "actor_id": n.actor_id,
                "actor_type": n.actor_type.value,
                "long_speed_mps": n.long_speed_mps,
                "on_intersection": n.on_intersection,
                "changed_lane": n.changed_lane,
                "primary_lane": n.primary_lane,
                "s_m": n.s_m,
                "position": list(n.position),
            }
            for n in graph.nodes
        ],
        "edges": [] if graph is None else [
            {
                "src": e.src,
                "dst": e.dst,
                "relation": e.relation.value,
                "path_length_m": e.path_length_m,
            }
            for e in sorted(graph.edges, key=lambda e: (e.src, e.dst, e.relation.value))
        ],
    }


def graph_from_dict(doc: dict) -> ActorGraph:
    try:
        nodes = [ActorNode(
            actor_id=str(n["actor_id"]),
            actor_type=ActorType(n["actor_type"]),
            long_speed_mps=float(n["long_speed_mps"]),
            on_intersection=bool(n["on_intersection"]),
            changed_lane=bool(n["changed_lane"]),
            primary_lane=int(n["primary_lane"]),
            s_m=float(n["s_m"]),
            position=tuple(float(x) for x in n["position"]),
        ) for n in doc["nodes"]]
        graph = ActorGraph(nodes)
        for e in doc["edges"]:
            graph.add_edge(str(e["src"]), str(e["dst"]),
                           RelationType(e["relation"]), float(e["path_length_m"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"invalid graph record: {exc}") from exc
    return graph


def save_graphs(results: Sequence[SceneGraphResult], scenes: Sequence[Scene],
                path: str | Path, label: str) -> None:
    doc = {
        "format": "scenecov-graphs",
        "version": 1,
        "label": label,
        "graphs": [graph_to_dict(r, s) for r, s in zip(results, scenes)],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_graphs(path: str | Path) -> tuple[list[dict], list[ActorGraph]]:
    """Load a graph batch file; returns (raw records, parsed graphs)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"cannot read graph file {path}: {exc}") from exc
    if doc.get("format") != "scenecov-graphs":
        raise SceneFormatError(f"{path}: not a scenecov graph file")
    records = doc.get("graphs", [])
    return records, [graph_from_dict(rec) for rec in records]
