"""Scenes, actor states, lane assignment, and the scene interchange format.

A scene is a single-timestep snapshot of all actors on one map. Scene and
SceneSet values are immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import SceneFormatError, UnmappableActorError
from .geometry import (
    angle_difference,
    heading_of_tangent,
    oriented_box,
    point_at_arc_length,
    polygon_contains,
    project_to_polyline,
)
from .lane_map import LaneMapGraph, MapEdgeType

# Poses farther than this from every lane centerline cannot be assigned.
LANE_ASSIGN_TOLERANCE_M = 3.0


class ActorType(enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    MOTORCYCLE = "motorcycle"


@dataclass(frozen=True)
class ActorState:
    """One actor at one timestep, expressed in lane coordinates.

    `extra` is an open key->number bag for user-defined attributes; core
    algorithms ignore it but matchers and feature extractors may read it.
    """

    actor_id: str
    primary_lane: int
    lane_ids: tuple[int, ...]
    s_m: float
    position: tuple[float, float, float]
    long_speed_mps: float
    actor_type: ActorType
    changed_lane: bool = False
    extra: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.primary_lane not in self.lane_ids:
            raise ValueError(f"actor {self.actor_id}: primary lane not in lane_ids")
        if self.long_speed_mps < 0:
            raise ValueError(f"actor {self.actor_id}: negative longitudinal speed")


@dataclass(frozen=True)
class RawActorPose:
    """A raw world pose for an actor that has not been lane-assigned yet."""

    actor_id: str
    position: tuple[float, float, float]
    heading_rad: float
    long_speed_mps: float
    actor_type: ActorType
    changed_lane: bool = False
    length_m: float = 4.6
    width_m: float = 1.9
    extra: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    map_ref: str
    timestep_s: float
    actors: tuple[ActorState, ...]
    source_tag: str = ""

    def __post_init__(self):
        ids = [a.actor_id for a in self.actors]
        if len(ids) != len(set(ids)):
            raise ValueError(f"scene {self.scene_id}: duplicate actor ids")

    @property
    def is_degenerate(self) -> bool:
        """Scenes with fewer than two actors produce empty actor graphs."""
        return len(self.actors) < 2


@dataclass(frozen=True)
class SceneSet:
    scenes: tuple[Scene, ...]
    label: str = "REF"
    load_warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.label not in ("REF", "TEST"):
            raise ValueError(f"scene set label must be REF or TEST, got {self.label!r}")


def assign_lanes(map_graph: LaneMapGraph, pose: RawActorPose) -> tuple[int, tuple[int, ...], float]:
    """Assign a raw pose to lanes.

    lane_ids collects every lane whose footprint contains at least one
    footprint corner; the primary lane minimizes lateral offset from the
    centerline, with heading misalignment then lane id as tie-breakers.
    When no footprint contains a corner, the nearest lane within
    LANE_ASSIGN_TOLERANCE_M laterally is used; beyond that the actor is
    unmappable.
    """
    corners = oriented_box(pose.position, pose.heading_rad, pose.length_m, pose.width_m)
    containing: list[int] = []
    for lane_id in sorted(map_graph.lanes):
        poly = map_graph.lanes[lane_id].footprint()
        if poly.area <= 0.0:
            continue
        if any(polygon_contains(poly, c) for c in corners):
            containing.append(lane_id)

    def rank(lane_id: int) -> tuple[float, float, int]:
        lane = map_graph.lanes[lane_id]
        s, lateral = project_to_polyline(lane.centerline, pose.position)
        _, tangent = point_at_arc_length(lane.centerline, s)
        mis = angle_difference(pose.heading_rad, heading_of_tangent(tangent))
        return lateral, mis, lane_id

    candidates = containing
    if not candidates:
        near = [(rank(lane_id), lane_id) for lane_id in sorted(map_graph.lanes)]
        near = [(r, lid) for r, lid in near if r[0] <= LANE_ASSIGN_TOLERANCE_M]
        if not near:
            raise UnmappableActorError(
                f"actor {pose.actor_id}: no lane within {LANE_ASSIGN_TOLERANCE_M} m",
                actor_id=pose.actor_id)
        candidates = [min(near)[1]]

    primary = min(candidates, key=rank)
    s_m, _ = project_to_polyline(map_graph.lanes[primary].centerline, pose.position)
    return primary, tuple(candidates), s_m


def actor_from_pose(map_graph: LaneMapGraph, pose: RawActorPose) -> ActorState:
    primary, lane_ids, s_m = assign_lanes(map_graph, pose)
    return ActorState(
        actor_id=pose.actor_id,
        primary_lane=primary,
        lane_ids=lane_ids,
        s_m=s_m,
        position=tuple(float(x) for x in pose.position),
        long_speed_mps=pose.long_speed_mps,
        actor_type=pose.actor_type,
        changed_lane=pose.changed_lane,
        extra=dict(pose.extra),
    )


def detect_lane_change(map_graph: LaneMapGraph, prev: Scene, curr: Scene) -> Scene:
    """Recompute changed_lane flags for curr against prev.

    An actor changed lanes iff it appears in both scenes, its primary lane
    differs, and the new lane is not a following-successor of the old one
    (driving straight across a lane boundary is not a lane change). Actors
    absent from prev get changed_lane=False.
    """
    if prev.map_ref != curr.map_ref:
        raise ValueError("scenes must share a map to compare lane changes")
    prev_lane = {a.actor_id: a.primary_lane for a in prev.actors}
    updated = []
    for actor in curr.actors:
        old = prev_lane.get(actor.actor_id)
        changed = (old is not None and old != actor.primary_lane
                   and not map_graph.has_edge(old, actor.primary_lane, MapEdgeType.FOLLOWING))
        updated.append(ActorState(
            actor.actor_id, actor.primary_lane, actor.lane_ids, actor.s_m,
            actor.position, actor.long_speed_mps, actor.actor_type,
            changed, dict(actor.extra)))
    return Scene(curr.scene_id, curr.map_ref, curr.timestep_s, tuple(updated), curr.source_tag)


# -- interchange file format ----------------------------------------------

def _actor_to_dict(actor: ActorState) -> dict:
    return {
        "actor_id": actor.actor_id,
        "primary_lane": actor.primary_lane,
        "lane_ids": list(actor.lane_ids),
        "s_m": actor.s_m,
        "position": list(actor.position),
        "long_speed_mps": actor.long_speed_mps,
        "actor_type": actor.actor_type.value,
        "changed_lane": actor.changed_lane,
        "extra": {k: actor.extra[k] for k in sorted(actor.extra)},
    }


def _parse_actor(rec: dict, scene_index: int, actor_index: int,
                 map_graph: LaneMapGraph | None) -> ActorState | None:
    def fail(fieldname: str, msg: str):
        raise SceneFormatError(
            f"scene {scene_index}, actor {actor_index}, field {fieldname}: {msg}",
            scene_index=scene_index, actor_index=actor_index, field=fieldname)

    if "pose" in rec:
        if map_graph is None:
            fail("pose", "raw poses require a map to assign lanes")
        p = rec["pose"]
        try:
            atype = ActorType(p["actor_type"])
        except ValueError:
            fail("actor_type", f"unknown actor type {p.get('actor_type')!r}")
        pose = RawActorPose(
            actor_id=str(rec["actor_id"]),
            position=tuple(float(x) for x in p["position"]),
            heading_rad=float(p["heading_rad"]),
            long_speed_mps=float(p["long_speed_mps"]),
            actor_type=atype,
            changed_lane=bool(p.get("changed_lane", False)),
            length_m=float(p.get("length_m", 4.6)),
            width_m=float(p.get("width_m", 1.9)),
            extra=p.get("extra", {}),
        )
        return actor_from_pose(map_graph, pose)

    for key in ("actor_id", "primary_lane", "lane_ids", "s_m", "position",
                "long_speed_mps", "actor_type"):
        if key not in rec:
            fail(key, "missing")
    try:
        atype = ActorType(rec["actor_type"])
    except ValueError:
        fail("actor_type", f"unknown actor type {rec['actor_type']!r}")
    try:
        return ActorState(
            actor_id=str(rec["actor_id"]),
            primary_lane=int(rec["primary_lane"]),
            lane_ids=tuple(int(x) for x in rec["lane_ids"]),
            s_m=float(rec["s_m"]),
            position=tuple(float(x) for x in rec["position"]),
            long_speed_mps=float(rec["long_speed_mps"]),
            actor_type=atype,
            changed_lane=bool(rec.get("changed_lane", False)),
            extra=rec.get("extra", {}),
        )
    except (TypeError, ValueError) as exc:
        fail("actors", str(exc))
    return None


def save_scenes(scene_set: SceneSet, path: str | Path) -> None:
    doc = {
        "format": "scenecov-scenes",
        "version": 1,
        "label": scene_set.label,
        "scenes": [
            {
                "scene_id": s.scene_id,
                "map_ref": s.map_ref,
                "timestep_s": s.timestep_s,
                "source_tag": s.source_tag,
                "actors": [_actor_to_dict(a) for a in s.actors],
            }
            for s in scene_set.scenes
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scenes(path: str | Path, map_graph: LaneMapGraph | None = None) -> SceneSet:
    """Load a scene interchange file.

    Records may carry pre-assigned lane coordinates or raw poses; raw poses
    are lane-assigned on the fly (requires map_graph). Unmappable actors are
    dropped and reported in SceneSet.load_warnings.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"cannot read scene file {path}: {exc}") from exc
    if doc.get("format") != "scenecov-scenes":
        raise SceneFormatError(f"{path}: not a scenecov scene file")
    warnings: list[str] = []
    scenes: list[Scene] = []
    for i, rec in enumerate(doc.get("scenes", [])):
        for key in ("scene_id", "map_ref", "timestep_s", "actors"):
            if key not in rec:
                raise SceneFormatError(f"scene {i}: missing field {key}",
                                       scene_index=i, field=key)
        actors = []
        for j, arec in enumerate(rec["actors"]):
            try:
                actor = _parse_actor(arec, i, j, map_graph)
            except UnmappableActorError as exc:
                warnings.append(f"scene {rec['scene_id']}: {exc}")
                continue
            if actor is not None:
                actors.append(actor)
        scene = Scene(
            scene_id=str(rec["scene_id"]),
            map_ref=str(rec["map_ref"]),
            timestep_s=float(rec["timestep_s"]),
            actors=tuple(actors),
            source_tag=str(rec.get("source_tag", "")),
        )
        if scene.is_degenerate:
            warnings.append(f"scene {scene.scene_id}: degenerate ({len(actors)} actors)")
        scenes.append(scene)
    return SceneSet(scenes=tuple(scenes), label=doc.get("label", "REF"),
                    load_warnings=tuple(warnings))
