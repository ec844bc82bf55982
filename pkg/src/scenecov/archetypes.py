"""Archetype pattern graphs and subgraph matching against scene graphs.

An archetype is a small attributed pattern; a scene graph covers it when an
injective, edge-type-preserving mapping of the pattern into the graph exists
whose node constraints hold. Matching is monomorphic: extra edges between
mapped actors never invalidate a match. Patterns ship as data files so the
catalog can be audited or extended without code changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .actor_graph import ActorGraph, ActorNode, RelationType
from .errors import ArchetypeFormatError
from .scene_model import ActorType

DEFAULT_EMBEDDING_CAP = 64


@dataclass(frozen=True)
class PatternNode:
    """A role in an archetype with optional attribute constraints.

    Supported constraint keys: actor_type, on_intersection, changed_lane.
    Unconstrained attributes match anything.
    """

    role: str
    actor_type: ActorType | None = None
    on_intersection: bool | None = None
    changed_lane: bool | None = None

    def admits(self, node: ActorNode) -> bool:
        if self.actor_type is not None and node.actor_type is not self.actor_type:
            return False
        if self.on_intersection is not None and node.on_intersection != self.on_intersection:
            return False
        if self.changed_lane is not None and node.changed_lane != self.changed_lane:
            return False
        return True


@dataclass(frozen=True)
class PatternEdge:
    src_role: str
    dst_role: str
    relation: RelationType


@dataclass(frozen=True)
class Archetype:
    name: str
    nodes: tuple[PatternNode, ...]
    edges: tuple[PatternEdge, ...]
    isolation_required: bool = False
    group: str = ""

    def __post_init__(self):
        roles = [n.role for n in self.nodes]
        if len(roles) != len(set(roles)):
            raise ArchetypeFormatError(f"{self.name}: duplicate roles")
        by_role = set(roles)
        for e in self.edges:
            if e.src_role not in by_role or e.dst_role not in by_role:
                raise ArchetypeFormatError(f"{self.name}: edge references unknown role")
            if e.src_role == e.dst_role:
                raise ArchetypeFormatError(f"{self.name}: self loops not allowed")
        if not self._weakly_connected():
            raise ArchetypeFormatError(f"{self.name}: pattern must be weakly connected")

    def _weakly_connected(self) -> bool:
        if not self.nodes:
            return False
        adj: dict[str, set[str]] = {n.role: set() for n in self.nodes}
        for e in self.edges:
            adj[e.src_role].add(e.dst_role)
            adj[e.dst_role].add(e.src_role)
        seen = {self.nodes[0].role}
        stack = [self.nodes[0].role]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.nodes)

    @property
    def actor_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def edge_type_set(self) -> frozenset[RelationType]:
        return frozenset(e.relation for e in self.edges)

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(n.role for n in self.nodes)


@dataclass(frozen=True)
class ArchetypeCatalog:
    archetypes: tuple[Archetype, ...]

    def __post_init__(self):
        names = [a.name for a in self.archetypes]
        if len(names) != len(set(names)):
            raise ArchetypeFormatError("duplicate archetype names in catalog")

    def __iter__(self) -> Iterator[Archetype]:
        return iter(self.archetypes)

    def __len__(self) -> int:
        return len(self.archetypes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.archetypes)

    def get(self, name: str) -> Archetype:
        for a in self.archetypes:
            if a.name == name:
                return a
        raise KeyError(name)


@dataclass(frozen=True)
class MatchPolicy:
    """Knobs for match enumeration.

    embedding_cap bounds how many embeddings are enumerated per
    (scene, archetype); counts that hit the cap are reported as capped,
    meaning "at least cap". None removes the bound.
    """

    embedding_cap: int | None = DEFAULT_EMBEDDING_CAP

    def __post_init__(self):
        if self.embedding_cap is not None and self.embedding_cap < 1:
            raise ValueError("embedding_cap must be >= 1 or None")


@dataclass
class MatchResult:
    archetype: str
    matched: bool
    embeddings: tuple[Mapping[str, str], ...]
    count: int
    capped: bool
    role_speeds: dict[str, tuple[float, ...]]
    path_lengths: tuple[float, ...]

    @property
    def covered_actor_ids(self) -> frozenset[str]:
        covered: set[str] = set()
        for emb in self.embeddings:
            covered.update(emb.values())
        return frozenset(covered)


def _pattern_order(archetype: Archetype) -> list[int]:
    """Matching order: start at role 0, then always extend along pattern
    edges, preferring nodes with the most already-placed neighbors."""
    n = len(archetype.nodes)
    idx = {node.role: i for i, node in enumerate(archetype.nodes)}
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for e in archetype.edges:
        neighbors[idx[e.src_role]].add(idx[e.dst_role])
        neighbors[idx[e.dst_role]].add(idx[e.src_role])
    order = [0]
    placed = {0}
    while len(order) < n:
        best = None
        for i in range(n):
            if i in placed:
                continue
            score = len(neighbors[i] & placed)
            if best is None or score > best[0]:
                best = (score, -i)
        order.append(-best[1])
        placed.add(-best[1])
    return order


def _host_index(graph: ActorGraph) -> dict[tuple[str, str], set[RelationType]]:
    index: dict[tuple[str, str], set[RelationType]] = {}
    for e in graph.edges:
        index.setdefault((e.src, e.dst), set()).add(e.relation)
    return index


def match(archetype: Archetype, graph: ActorGraph,
          policy: MatchPolicy = MatchPolicy()) -> MatchResult:
    """Find injective, edge-preserving embeddings of an archetype.

    Every pattern edge must map onto a host edge of the same relation type
    and every constrained node attribute must hold. If the archetype
    requires isolation, the mapped actors must form an entire weakly
    connected component of the scene graph. Embeddings are enumerated in
    deterministic (actor-id sorted) order up to the policy cap.
    """
    if not archetype.nodes:
        raise ArchetypeFormatError("cannot match an empty pattern")
    n = len(archetype.nodes)
    order = _pattern_order(archetype)
    idx = {node.role: i for i, node in enumerate(archetype.nodes)}
    required: dict[tuple[int, int], list[RelationType]] = {}
    for e in archetype.edges:
        required.setdefault((idx[e.src_role], idx[e.dst_role]), []).append(e.relation)
    host_edges = _host_index(graph)
    host_nodes = graph.nodes
    cap = policy.embedding_cap

    candidates_per_pattern = [
        [h.actor_id for h in host_nodes if archetype.nodes[i].admits(h)]
        for i in range(n)
    ]

    assignment: dict[int, str] = {}
    used: set[str] = set()
    found: list[dict[str, str]] = []
    hit_cap = False

    def edges_ok(p: int, host_id: str) -> bool:
        for q, q_host in assignment.items():
            for rel in required.get((p, q), ()):
                if rel not in host_edges.get((host_id, q_host), ()):
                    return False
            for rel in required.get((q, p), ()):
                if rel not in host_edges.get((q_host, host_id), ()):
                    return False
        return True

    def backtrack(depth: int) -> bool:
        """Returns True when enumeration should stop (cap overrun seen)."""
        nonlocal hit_cap
        if depth == n:
            if archetype.isolation_required:
                component = graph.weakly_connected_component(next(iter(used)))
                if component != frozenset(used):
                    return False
            if cap is not None and len(found) >= cap:
                hit_cap = True
                return True
            found.append({archetype.nodes[p].role: h for p, h in assignment.items()})
            return False
        p = order[depth]
        for host_id in candidates_per_pattern[p]:
            if host_id in used or not edges_ok(p, host_id):
                continue
            assignment[p] = host_id
            used.add(host_id)
            stop = backtrack(depth + 1)
            used.discard(host_id)
            del assignment[p]
            if stop:
                return True
        return False

    backtrack(0)

    role_speeds: dict[str, list[float]] = {node.role: [] for node in archetype.nodes}
    path_lengths: list[float] = []
    node_by_id = {h.actor_id: h for h in host_nodes}
    for emb in found:
        for role, actor_id in emb.items():
            role_speeds[role].append(node_by_id[actor_id].long_speed_mps)
        for e in archetype.edges:
            src, dst = emb[e.src_role], emb[e.dst_role]
            for he in graph.out_edges(src):
                if he.dst == dst and he.relation is e.relation:
                    path_lengths.append(abs(he.path_length_m))
                    break
    return MatchResult(
        archetype=archetype.name,
        matched=bool(found),
        embeddings=tuple(found),
        count=len(found),
        capped=hit_cap,
        role_speeds={r: tuple(v) for r, v in role_speeds.items()},
        path_lengths=tuple(path_lengths),
    )


@dataclass
class CoverageTable:
    """Scene-by-archetype hit table with embedding metadata."""

    label: str
    scene_ids: tuple[str, ...]
    archetypes: tuple[str, ...]
    hits: list[dict[str, bool]]
    counts: list[dict[str, int]]
    capped: list[dict[str, bool]]
    role_speeds: list[dict[str, dict[str, tuple[float, ...]]]]
    path_lengths: list[dict[str, tuple[float, ...]]]
    n_nodes: tuple[int, ...]
    covered_nodes: tuple[int, ...]

    @property
    def n_scenes(self) -> int:
        return len(self.scene_ids)

    def coverage_percent(self, archetype: str) -> float:
        if not self.scene_ids:
            return 0.0
        return 100.0 * sum(1 for h in self.hits if h[archetype]) / len(self.scene_ids)

    def node_coverage_fraction(self) -> float:
        total = sum(self.n_nodes)
        return sum(self.covered_nodes) / total if total else 0.0


def build_coverage_table(catalog: ArchetypeCatalog, graphs: Sequence[ActorGraph],
                         scene_ids: Sequence[str] | None = None,
                         policy: MatchPolicy = MatchPolicy(),
                         label: str = "REF") -> CoverageTable:
    """Match every archetype against every scene graph."""
    if scene_ids is None:
        scene_ids = [str(i) for i in range(len(graphs))]
    if len(scene_ids) != len(graphs):
        raise ValueError("scene_ids and graphs must align")
    hits, counts, capped, speeds, lengths = [], [], [], [], []
    n_nodes, covered_nodes = [], []
    for graph in graphs:
        row_hits: dict[str, bool] = {}
        row_counts: dict[str, int] = {}
        row_capped: dict[str, bool] = {}
        row_speeds: dict[str, dict[str, tuple[float, ...]]] = {}
        row_lengths: dict[str, tuple[float, ...]] = {}
        covered: set[str] = set()
        for archetype in catalog:
            result = match(archetype, graph, policy)
            row_hits[archetype.name] = result.matched
            row_counts[archetype.name] = result.count
            row_capped[archetype.name] = result.capped
            if result.matched:
                row_speeds[archetype.name] = result.role_speeds
                row_lengths[archetype.name] = result.path_lengths
                covered.update(result.covered_actor_ids)
        hits.append(row_hits)
        counts.append(row_counts)
        capped.append(row_capped)
        speeds.append(row_speeds)
        lengths.append(row_lengths)
        n_nodes.append(graph.n_nodes)
        covered_nodes.append(len(covered))
    return CoverageTable(
        label=label, scene_ids=tuple(scene_ids), archetypes=catalog.names,
        hits=hits, counts=counts, capped=capped, role_speeds=speeds,
        path_lengths=lengths, n_nodes=tuple(n_nodes), covered_nodes=tuple(covered_nodes))


@dataclass(frozen=True)
class NodeCoverageResult:
    fraction: float
    covered_actor_ids: frozenset[str]
    total_nodes: int
    degenerate: bool = False


def node_coverage(catalog: ArchetypeCatalog, graph: ActorGraph,
                  policy: MatchPolicy = MatchPolicy()) -> NodeCoverageResult:
    """Fraction of actors participating in at least one archetype embedding.

    Coverage counts nodes over the enumerated embeddings, so a finite cap
    can undercount on graphs with very many embeddings.
    """
    if graph.n_nodes == 0:
        return NodeCoverageResult(0.0, frozenset(), 0, degenerate=True)
    covered: set[str] = set()
    for archetype in catalog:
        covered.update(match(archetype, graph, policy).covered_actor_ids)
    return NodeCoverageResult(len(covered) / graph.n_nodes, frozenset(covered), graph.n_nodes)


def dataset_node_coverage(catalog: ArchetypeCatalog, graphs: Sequence[ActorGraph],
                          policy: MatchPolicy = MatchPolicy()) -> float:
    """Node coverage over a dataset: scene values weighted by node count."""
    covered = 0
    total = 0
    for graph in graphs:
        result = node_coverage(catalog, graph, policy)
        covered += len(result.covered_actor_ids)
        total += result.total_nodes
    return covered / total if total else 0.0


# -- archetype files --------------------------------------------------------

def archetype_from_dict(doc: dict) -> Archetype:
    try:
        nodes = []
        for rec in doc["nodes"]:
            cons = rec.get("constraints", {})
            unknown = set(cons) - {"actor_type", "on_intersection", "changed_lane"}
            if unknown:
                raise ArchetypeFormatError(
                    f"{doc.get('name')}: unknown constraints {sorted(unknown)}")
            nodes.append(PatternNode(
                role=str(rec["role_name"]),
                actor_type=ActorType(cons["actor_type"]) if "actor_type" in cons else None,
                on_intersection=cons.get("on_intersection"),
                changed_lane=cons.get("changed_lane"),
            ))
        edges = [PatternEdge(str(e["src_role"]), str(e["dst_role"]),
                             RelationType(e["relation"]))
                 for e in doc["edges"]]
        return Archetype(
            name=str(doc["name"]),
            nodes=tuple(nodes),
            edges=tuple(edges),
            isolation_required=bool(doc.get("isolation_required", False)),
            group=str(doc.get("group", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ArchetypeFormatError):
            raise
        raise ArchetypeFormatError(f"invalid archetype definition: {exc}") from exc


def archetype_to_dict(archetype: Archetype) -> dict:
    nodes = []
    for n in archetype.nodes:
        cons: dict = {}
        if n.actor_type is not None:
            cons["actor_type"] = n.actor_type.value
        if n.on_intersection is not None:
            cons["on_intersection"] = n.on_intersection
        if n.changed_lane is not None:
            cons["changed_lane"] = n.changed_lane
        nodes.append({"role_name": n.role, "constraints": cons})
    return {
        "format": "scenecov-archetype",
        "version": 1,
        "name": archetype.name,
        "group": archetype.group,
        "isolation_required": archetype.isolation_required,
        "nodes": nodes,
        "edges": [{"src_role": e.src_role, "dst_role": e.dst_role,
                   "relation": e.relation.value}
                  for e in archetype.edges],
    }


def load_catalog(directory: str | Path) -> ArchetypeCatalog:
    """Load all *.json archetype files from a directory, filename-sorted."""
    directory = Path(directory)
    files = sorted(directory.glob("*.json"))
    if not files:
        raise ArchetypeFormatError(f"no archetype files in {directory}")
    archetypes = []
    for f in files:
        doc = json.loads(f.read_text(encoding="utf-8"))
        if doc.get("format") != "scenecov-archetype":
            raise ArchetypeFormatError(f"{f}: not an archetype file")
        archetypes.append(archetype_from_dict(doc))
    return ArchetypeCatalog(tuple(archetypes))


def default_catalog() -> ArchetypeCatalog:
    """The 18 built-in archetypes, shipped as package data."""
    root = resources.files("scenecov").joinpath("archetype_data")
    archetypes = []
    for entry in sorted(root.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            archetypes.append(archetype_from_dict(json.loads(entry.read_text(encoding="utf-8"))))
    return ArchetypeCatalog(tuple(archetypes))
