"""Shared fixtures: small hand-made maps and generator helpers."""

from __future__ import annotations

import numpy as np
import pytest

from scenecov.actor_graph import ConstructionParams
from scenecov.lane_map import LaneDescription, build_map
from scenecov.scene_model import ActorState, ActorType, Scene
from scenecov.synth import straight_multilane, t_junction, crossroads


def straight_lane(lane_id, x0, x1, y, **adj):
    """Axis-aligned lane of width 3.5 m."""
    return LaneDescription(
        id=lane_id,
        centerline=[[x0, y, 0.0], [x1, y, 0.0]],
        left_boundary=[[x0, y + 1.75, 0.0], [x1, y + 1.75, 0.0]]
        if x1 > x0 else [[x0, y - 1.75, 0.0], [x1, y - 1.75, 0.0]],
        right_boundary=[[x0, y - 1.75, 0.0], [x1, y - 1.75, 0.0]]
        if x1 > x0 else [[x0, y + 1.75, 0.0], [x1, y + 1.75, 0.0]],
        **adj,
    )


@pytest.fixture
def two_lane_chain():
    """Lane 0 (length 50) followed by lane 1 (length 100)."""
    return build_map([
        straight_lane(0, 0, 50, 0.0, successors=[1]),
        straight_lane(1, 50, 150, 0.0),
    ])


@pytest.fixture
def three_lane_chain():
    """Chain with lengths 30 / 40 / 30."""
    return build_map([
        straight_lane(0, 0, 30, 0.0, successors=[1]),
        straight_lane(1, 30, 70, 0.0, successors=[2]),
        straight_lane(2, 70, 100, 0.0),
    ])


@pytest.fixture
def two_way_road():
    """One forward lane (0) and its opposite (1), both 200 m, plus a
    forward neighbor lane (2)."""
    return build_map([
        straight_lane(0, 0, 200, -1.75, opposites=[1], right_neighbors=[2]),
        straight_lane(1, 200, 0, 1.75),
        straight_lane(2, 0, 200, -5.25),
    ])


def vehicle(actor_id, lane, s, x, y, speed=10.0, changed=False,
            actor_type=ActorType.VEHICLE):
    return ActorState(
        actor_id=actor_id, primary_lane=lane, lane_ids=(lane,), s_m=s,
        position=(x, y, 0.0), long_speed_mps=speed, actor_type=actor_type,
        changed_lane=changed)


def scene_of(map_ref, *actors, scene_id="s0"):
    return Scene(scene_id, map_ref, 0.0, tuple(actors), source_tag="test")


@pytest.fixture
def params():
    return ConstructionParams()


def random_straight_template(rng: np.random.Generator):
    """Random small multilane map (at most 10 lanes) for oracle sweeps."""
    while True:
        n_forward = int(rng.integers(1, 4))
        n_backward = int(rng.integers(0, 3))
        segments = int(rng.integers(1, 3))
        if (n_forward + n_backward) * segments <= 10:
            break
    length = float(rng.uniform(60, 240))
    return straight_multilane(n_forward=n_forward, n_backward=n_backward,
                              lane_length=length, segments=segments)


def random_scene(rng: np.random.Generator, map_graph, max_actors=8, scene_id="s0"):
    from scenecov.geometry import point_at_arc_length

    lane_ids = sorted(map_graph.lanes)
    n = int(rng.integers(1, max_actors + 1))
    actors = []
    for i in range(n):
        lane = map_graph.lanes[lane_ids[int(rng.integers(0, len(lane_ids)))]]
        s = float(rng.uniform(0, lane.length_m))
        point, _ = point_at_arc_length(lane.centerline, s)
        actors.append(ActorState(
            actor_id=f"a{i}", primary_lane=lane.id, lane_ids=(lane.id,), s_m=s,
            position=(float(point[0]), float(point[1]), 0.0),
            long_speed_mps=float(rng.uniform(0, 20)),
            actor_type=ActorType.VEHICLE if rng.random() < 0.85 else ActorType.CYCLIST,
            changed_lane=bool(rng.random() < 0.2)))
    return Scene(scene_id, map_graph.map_id, 0.0, tuple(actors), source_tag="random")
