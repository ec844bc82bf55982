"""Directed lane multigraph: following / neighbor / opposite relations.

Lanes are nodes; edges encode how lane segments connect. Neighbor and
opposite edges are stored symmetrically, following edges are directional.
The graph is immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import MapFormatError
from .geometry import (
    arc_length,
    as_polyline,
    footprint_polygon,
)

# Lane pairs whose footprints overlap by more than this area (m^2) count as
# geometrically overlapping; smaller values reject shared-boundary touching.
OVERLAP_AREA_M2 = 1e-3


class MapEdgeType(enum.Enum):
    FOLLOWING = "following"
    NEIGHBOR = "neighbor"
    OPPOSITE = "opposite"


class PathPattern(enum.Enum):
    """Admissible edge-type multisets for lane paths between two actors."""

    ALL_FOLLOWING = "all_following"
    EXACTLY_ONE_NEIGHBOR = "exactly_one_neighbor"
    EXACTLY_ONE_OPPOSITE = "exactly_one_opposite"

    @property
    def special_edge(self) -> MapEdgeType | None:
        if self is PathPattern.EXACTLY_ONE_NEIGHBOR:
            return MapEdgeType.NEIGHBOR
        if self is PathPattern.EXACTLY_ONE_OPPOSITE:
            return MapEdgeType.OPPOSITE
        return None


@dataclass(frozen=True, eq=False)
class Lane:
    """A lane segment with geometry and semantic tags."""

    id: int
    centerline: np.ndarray
    left_boundary: np.ndarray
    right_boundary: np.ndarray
    length_m: float
    is_intersection: bool = False
    road_type: str = "road"
    lane_type: str = "driving"

    def footprint(self):
        return footprint_polygon(self.left_boundary, self.right_boundary)


@dataclass
class LaneDescription:
    """Interchange record: geometry plus explicitly declared adjacency."""

    id: int
    centerline: Sequence
    left_boundary: Sequence
    right_boundary: Sequence
    successors: Sequence[int] = ()
    left_neighbors: Sequence[int] = ()
    right_neighbors: Sequence[int] = ()
    opposites: Sequence[int] = ()
    is_intersection: bool = False
    road_type: str = "road"
    lane_type: str = "driving"


@dataclass(frozen=True)
class LanePath:
    """Ordered lanes and the edge types that connect them."""

    lane_ids: tuple[int, ...]
    edge_types: tuple[MapEdgeType, ...]

    def __post_init__(self):
        if len(self.edge_types) != max(len(self.lane_ids) - 1, 0):
            raise ValueError("edge_types must have one entry per lane transition")

    @property
    def num_edges(self) -> int:
        return len(self.edge_types)

    def matches(self, pattern: PathPattern) -> bool:
        counts = {t: 0 for t in MapEdgeType}
        for t in self.edge_types:
            counts[t] += 1
        if pattern is PathPattern.ALL_FOLLOWING:
            return counts[MapEdgeType.NEIGHBOR] == 0 and counts[MapEdgeType.OPPOSITE] == 0
        if pattern is PathPattern.EXACTLY_ONE_NEIGHBOR:
            return counts[MapEdgeType.NEIGHBOR] == 1 and counts[MapEdgeType.OPPOSITE] == 0
        return counts[MapEdgeType.OPPOSITE] == 1 and counts[MapEdgeType.NEIGHBOR] == 0


class LaneMapGraph:
    """Immutable directed multigraph over lanes.

    Adjacency is indexed per edge type with destination lists kept sorted,
    so traversals are deterministic regardless of declaration order.
    """

    def __init__(self, lanes: dict[int, Lane],
                 edges: Iterable[tuple[int, int, MapEdgeType]],
                 map_id: str = "map",
                 warnings: Sequence[str] = ()):
        self.map_id = map_id
        self.lanes: dict[int, Lane] = dict(sorted(lanes.items()))
        self.warnings: tuple[str, ...] = tuple(warnings)
        edge_set: set[tuple[int, int, MapEdgeType]] = set()
        adj: dict[MapEdgeType, dict[int, list[int]]] = {t: {} for t in MapEdgeType}
        for src, dst, etype in edges:
            for endpoint in (src, dst):
                if endpoint not in self.lanes:
                    raise MapFormatError(
                        f"edge references unknown lane {endpoint}", lane_id=endpoint)
            key = (src, dst, etype)
            if key in edge_set:
                continue
            edge_set.add(key)
            adj[etype].setdefault(src, []).append(dst)
        for per_type in adj.values():
            for dsts in per_type.values():
                dsts.sort()
        self._edges = edge_set
        self._adj = adj
        self._max_lane_length = max((l.length_m for l in self.lanes.values()), default=0.0)

    # -- queries ---------------------------------------------------------

    @property
    def edges(self) -> list[tuple[int, int, MapEdgeType]]:
        return sorted(self._edges, key=lambda e: (e[0], e[1], e[2].value))

    @property
    def max_lane_length(self) -> float:
        return self._max_lane_length

    def lane(self, lane_id: int) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise MapFormatError(f"unknown lane {lane_id}", lane_id=lane_id) from None

    def has_edge(self, src: int, dst: int, etype: MapEdgeType) -> bool:
        return (src, dst, etype) in self._edges

    def following(self, lane_id: int) -> list[int]:
        return self._adj[MapEdgeType.FOLLOWING].get(lane_id, [])

    def neighbors(self, lane_id: int) -> list[int]:
        return self._adj[MapEdgeType.NEIGHBOR].get(lane_id, [])

    def opposites(self, lane_id: int) -> list[int]:
        return self._adj[MapEdgeType.OPPOSITE].get(lane_id, [])

    def out_edges(self, lane_id: int) -> Iterator[tuple[int, MapEdgeType]]:
        for etype in (MapEdgeType.FOLLOWING, MapEdgeType.NEIGHBOR, MapEdgeType.OPPOSITE):
            for dst in self._adj[etype].get(lane_id, []):
                yield dst, etype

    def adjacent_following_or_neighbor(self, a: int, b: int) -> bool:
        return (self.has_edge(a, b, MapEdgeType.FOLLOWING)
                or self.has_edge(b, a, MapEdgeType.FOLLOWING)
                or self.has_edge(a, b, MapEdgeType.NEIGHBOR))


def build_map(lane_descriptions: Sequence[LaneDescription], map_id: str = "map") -> LaneMapGraph:
    """Build a LaneMapGraph from interchange records.

    Following edges point from each lane to each declared successor;
    neighbor and opposite declarations are closed under symmetry. Dangling
    lane references and empty inputs are rejected.
    """
    if not lane_descriptions:
        raise MapFormatError("lane list is empty")
    lanes: dict[int, Lane] = {}
    for desc in lane_descriptions:
        if desc.id in lanes:
            raise MapFormatError(f"duplicate lane id {desc.id}", lane_id=desc.id)
        centerline = as_polyline(desc.centerline)
        lanes[desc.id] = Lane(
            id=desc.id,
            centerline=centerline,
            left_boundary=as_polyline(desc.left_boundary),
            right_boundary=as_polyline(desc.right_boundary),
            length_m=arc_length(centerline),
            is_intersection=bool(desc.is_intersection),
            road_type=desc.road_type,
            lane_type=desc.lane_type,
        )
    edges: list[tuple[int, int, MapEdgeType]] = []
    for desc in lane_descriptions:
        for ref_list, etype in (
            (desc.successors, MapEdgeType.FOLLOWING),
            (desc.left_neighbors, MapEdgeType.NEIGHBOR),
            (desc.right_neighbors, MapEdgeType.NEIGHBOR),
            (desc.opposites, MapEdgeType.OPPOSITE),
        ):
            for ref in ref_list:
                if ref not in lanes:
                    raise MapFormatError(
                        f"lane {desc.id} references unknown lane {ref}", lane_id=desc.id)
                edges.append((desc.id, ref, etype))
                if etype in (MapEdgeType.NEIGHBOR, MapEdgeType.OPPOSITE):
                    edges.append((ref, desc.id, etype))
    return LaneMapGraph(lanes, edges, map_id=map_id)


def mark_intersections(map_graph: LaneMapGraph) -> LaneMapGraph:
    """Flag lanes whose footprints geometrically overlap.

    Every lane pair with overlap area above OVERLAP_AREA_M2 that is not
    following- or neighbor-adjacent gets is_intersection=True on both sides.
    Pre-existing flags are preserved; the operation is idempotent. Lanes
    with degenerate footprints are skipped and reported in warnings.
    """
    lane_ids = sorted(map_graph.lanes)
    polygons = {}
    warnings = list(map_graph.warnings)
    for lane_id in lane_ids:
        poly = map_graph.lanes[lane_id].footprint()
        if poly.area <= 0.0:
            warnings.append(f"lane {lane_id}: degenerate footprint, skipped for overlap check")
            continue
        polygons[lane_id] = poly
    flagged = {lane_id for lane_id in lane_ids if map_graph.lanes[lane_id].is_intersection}
    usable = sorted(polygons)
    for i, a in enumerate(usable):
        for b in usable[i + 1:]:
            if map_graph.adjacent_following_or_neighbor(a, b):
                continue
            pa, pb = polygons[a], polygons[b]
            if not pa.bounds or pa.bounds[2] < pb.bounds[0] or pb.bounds[2] < pa.bounds[0] \
                    or pa.bounds[3] < pb.bounds[1] or pb.bounds[3] < pa.bounds[1]:
                continue
            if pa.intersection(pb).area > OVERLAP_AREA_M2:
                flagged.add(a)
                flagged.add(b)
    new_lanes = {}
    for lane_id, lane in map_graph.lanes.items():
        if lane_id in flagged and not lane.is_intersection:
            lane = Lane(lane.id, lane.centerline, lane.left_boundary, lane.right_boundary,
                        lane.length_m, True, lane.road_type, lane.lane_type)
        new_lanes[lane_id] = lane
    return LaneMapGraph(new_lanes, map_graph.edges, map_id=map_graph.map_id, warnings=warnings)


def iter_pattern_paths(map_graph: LaneMapGraph, from_lane: int, to_lane: int,
                       pattern: PathPattern, max_cost_m: float) -> Iterator[LanePath]:
    """Enumerate simple lane paths from from_lane to to_lane matching pattern.

    Path cost is the summed full length of every lane on the path except the
    last; branches are pruned once the cost exceeds max_cost_m. Paths are
    yielded in lexicographic lane-id order. The zero-length path qualifies
    for ALL_FOLLOWING when from_lane == to_lane.
    """
    map_graph.lane(from_lane)
    map_graph.lane(to_lane)
    special = pattern.special_edge

    if pattern is PathPattern.ALL_FOLLOWING and from_lane == to_lane:
        yield LanePath((from_lane,), ())

    def dfs(current: int, visited: set[int], lanes: list[int],
            etypes: list[MapEdgeType], cost: float, used_special: bool):
        for dst, etype in map_graph.out_edges(current):
            if dst in visited:
                continue
            if etype is not MapEdgeType.FOLLOWING:
                if special is None or etype is not special or used_special:
                    continue
                now_special = True
            else:
                now_special = used_special
            new_cost = cost + map_graph.lane(current).length_m
            if new_cost > max_cost_m:
                continue
            lanes.append(dst)
            etypes.append(etype)
            if dst == to_lane:
                if special is None or now_special:
                    yield LanePath(tuple(lanes), tuple(etypes))
                # a simple path cannot end at to_lane twice
            else:
                visited.add(dst)
                yield from dfs(dst, visited, lanes, etypes, new_cost, now_special)
                visited.remove(dst)
            lanes.pop()
            etypes.pop()

    yield from dfs(from_lane, {from_lane}, [from_lane], [], 0.0, False)


def path_cost(map_graph: LaneMapGraph, path: LanePath) -> float:
    """Accumulated lane length: full lengths of all lanes except the last."""
    return sum(map_graph.lane(lane_id).length_m for lane_id in path.lane_ids[:-1])


def find_lane_path(map_graph: LaneMapGraph, from_lane: int, to_lane: int,
                   max_len_m: float, allowed_pattern: PathPattern) -> LanePath | None:
    """Shortest simple lane path matching the pattern, or None.

    Shortest by accumulated lane length; equal-cost ties resolve to the
    lexicographically smallest lane-id sequence.
    """
    if max_len_m <= 0:
        raise ValueError("max_len_m must be positive")
    best: tuple[float, tuple[int, ...], LanePath] | None = None
    for path in iter_pattern_paths(map_graph, from_lane, to_lane, allowed_pattern, max_len_m):
        key = (path_cost(map_graph, path), path.lane_ids)
        if best is None or key < (best[0], best[1]):
            best = (key[0], key[1], path)
    return best[2] if best else None


def path_length_between(map_graph: LaneMapGraph, path: LanePath,
                        s_from: float, s_to: float) -> float:
    """Signed longitudinal distance along a lane path.

    Walks the path accumulating travelled lane length; neighbor transitions
    carry the longitudinal station across at zero cost, opposite transitions
    mirror the station into the oncoming lane's frame and flip the sign of
    all subsequent motion. The result is positive when the target lies ahead
    of the source in the source's direction of travel.
    """
    if not path.lane_ids:
        raise ValueError("path must contain at least one lane")
    first = map_graph.lane(path.lane_ids[0])
    last = map_graph.lane(path.lane_ids[-1])
    if not (0.0 <= s_from <= first.length_m + 1e-9):
        raise ValueError(f"s_from={s_from} outside lane {first.id} of length {first.length_m}")
    if not (0.0 <= s_to <= last.length_m + 1e-9):
        raise ValueError(f"s_to={s_to} outside lane {last.id} of length {last.length_m}")

    pos = s_from
    sign = 1.0
    dist = 0.0
    for i, etype in enumerate(path.edge_types):
        lane = map_graph.lane(path.lane_ids[i])
        nxt = map_graph.lane(path.lane_ids[i + 1])
        if etype is MapEdgeType.FOLLOWING:
            dist += sign * (lane.length_m - pos)
            pos = 0.0
        elif etype is MapEdgeType.NEIGHBOR:
            pos = min(pos, nxt.length_m)
        else:  # OPPOSITE: mirror the station, flip the travel sign
            pos = min(max(nxt.length_m - pos, 0.0), nxt.length_m)
            sign = -sign
    dist += sign * (s_to - pos)
    return dist


# -- interchange file format ----------------------------------------------

def lane_descriptions_to_dicts(descs: Sequence[LaneDescription]) -> list[dict]:
    out = []
    for d in descs:
        out.append({
            "id": d.id,
            "centerline": [list(map(float, p)) for p in as_polyline(d.centerline)],
            "left_boundary": [list(map(float, p)) for p in as_polyline(d.left_boundary)],
            "right_boundary": [list(map(float, p)) for p in as_polyline(d.right_boundary)],
            "successors": sorted(int(x) for x in d.successors),
            "left_neighbors": sorted(int(x) for x in d.left_neighbors),
            "right_neighbors": sorted(int(x) for x in d.right_neighbors),
            "opposites": sorted(int(x) for x in d.opposites),
            "is_intersection": bool(d.is_intersection),
            "road_type": d.road_type,
            "lane_type": d.lane_type,
        })
    return out


def save_map(descs: Sequence[LaneDescription], path: str | Path, map_id: str = "map") -> None:
    doc = {
        "format": "scenecov-map",
        "version": 1,
        "map_id": map_id,
        "lanes": lane_descriptions_to_dicts(descs),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_map(path: str | Path, mark: bool = True) -> LaneMapGraph:
    """Load a map interchange file, optionally running intersection marking."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MapFormatError(f"cannot read map file {path}: {exc}") from exc
    if doc.get("format") != "scenecov-map":
        raise MapFormatError(f"{path}: not a scenecov map file")
    descs = []
    for i, rec in enumerate(doc.get("lanes", [])):
        try:
            descs.append(LaneDescription(
                id=int(rec["id"]),
                centerline=rec["centerline"],
                left_boundary=rec["left_boundary"],
                right_boundary=rec["right_boundary"],
                successors=rec.get("successors", []),
                left_neighbors=rec.get("left_neighbors", []),
                right_neighbors=rec.get("right_neighbors", []),
                opposites=rec.get("opposites", []),
                is_intersection=rec.get("is_intersection", False),
                road_type=rec.get("road_type", "road"),
                lane_type=rec.get("lane_type", "driving"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MapFormatError(f"{path}: lane record {i} invalid: {exc}") from exc
    graph = build_map(descs, map_id=doc.get("map_id", "map"))
    return mark_intersections(graph) if mark else graph
