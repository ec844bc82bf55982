"""Synthetic map templates and scene generation with planted archetypes.

Templates build interchange-format lane maps (straight multilane road,
T-junction, four-arm crossroads). The generator drops actor constellations
onto a template so that a chosen archetype is realized by construction,
optionally padding scenes with far-away filler actors that cannot form
relations with the planted cluster or each other. Ground-truth labels are
recorded for oracle testing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, SceneCovError
from .geometry import offset_polyline, point_at_arc_length
from .lane_map import LaneDescription, LaneMapGraph, build_map, mark_intersections
from .scene_model import ActorState, ActorType, Scene, SceneSet

LANE_WIDTH = 3.5
HALF_W = LANE_WIDTH / 2.0


def _lane(lane_id: int, points: Sequence[Sequence[float]], **adjacency) -> LaneDescription:
    center = np.asarray([[p[0], p[1], 0.0] for p in points])
    return LaneDescription(
        id=lane_id,
        centerline=center,
        left_boundary=offset_polyline(center, HALF_W),
        right_boundary=offset_polyline(center, -HALF_W),
        **adjacency,
    )


@dataclass
class TemplateMap:
    name: str
    descriptions: list[LaneDescription]
    lane_ids: dict[str, int]
    # base-recipe sites: forward lane, its aligned neighbor (or None), the
    # opposite lane, and the constant C with s_opposite = C - s_forward - gap
    fwd1: str | None = None
    fwd2: str | None = None
    bwd: str | None = None
    opp_base: float = 0.0
    filler_slots: list[tuple[str, float, float]] = field(default_factory=list)

    def build(self) -> LaneMapGraph:
        return mark_intersections(build_map(self.descriptions, map_id=self.name))


def straight_multilane(n_forward: int = 2, n_backward: int = 2,
                       lane_length: float = 400.0, segments: int = 1) -> TemplateMap:
    """Parallel lanes along x; forward traffic heads +x below the center
    line, backward traffic heads -x above it. Only the innermost pair is
    declared opposite."""
    if n_forward < 1 or n_backward < 0 or segments < 1:
        raise ConfigError("straight template needs n_forward >= 1, segments >= 1")
    seg = lane_length / segments
    names: dict[str, int] = {}
    descs: list[LaneDescription] = []
    next_id = 0

    def add(name: str, points, **adj) -> int:
        nonlocal next_id
        names[name] = next_id
        descs.append(_lane(next_id, points, **adj))
        next_id += 1
        return names[name]

    for i in range(n_forward):
        y = -(HALF_W + LANE_WIDTH * i)
        for j in range(segments):
            add(f"f{i}s{j}", [(j * seg, y), ((j + 1) * seg, y)])
    for i in range(n_backward):
        y = HALF_W + LANE_WIDTH * i
        for j in range(segments):
            add(f"b{i}s{j}", [(lane_length - j * seg, y), (lane_length - (j + 1) * seg, y)])

    by_name = {d.id: d for d in descs}
    for i in range(n_forward):
        for j in range(segments):
            d = by_name[names[f"f{i}s{j}"]]
            if j + 1 < segments:
                d.successors = [names[f"f{i}s{j + 1}"]]
            if i + 1 < n_forward:
                d.right_neighbors = [names[f"f{i + 1}s{j}"]]
    for i in range(n_backward):
        for j in range(segments):
            d = by_name[names[f"b{i}s{j}"]]
            if j + 1 < segments:
                d.successors = [names[f"b{i}s{j + 1}"]]
            if i + 1 < n_backward:
                d.right_neighbors = [names[f"b{i + 1}s{j}"]]
    if n_backward >= 1:
        for j in range(segments):
            by_name[names[f"f0s{j}"]].opposites = [names[f"b0s{segments - 1 - j}"]]

    template = TemplateMap("straight-multilane", descs, names)
    if segments == 1:
        template.fwd1 = "f0s0"
        template.fwd2 = "f1s0" if n_forward >= 2 else None
        template.bwd = "b0s0" if n_backward >= 1 else None
        template.opp_base = lane_length
        template.filler_slots = [("f0s0", 280.0, 300.0)]
        if n_forward >= 2:
            template.filler_slots.append(("f1s0", 370.0, 390.0))
        if n_backward >= 2:
            template.filler_slots.append(("b1s0", 10.0, 30.0))
    return template


def t_junction(arm_length: float = 100.0) -> TemplateMap:
    """Three-arm junction (west, east, south) with one lane per direction
    and six connector lanes crossing the junction box."""
    h = 10.0
    far = h + arm_length
    names: dict[str, int] = {}
    descs: list[LaneDescription] = []

    specs = [
        ("W_in", [(-far, -HALF_W), (-h, -HALF_W)]),
        ("W_out", [(-h, HALF_W), (-far, HALF_W)]),
        ("E_in", [(far, HALF_W), (h, HALF_W)]),
        ("E_out", [(h, -HALF_W), (far, -HALF_W)]),
        ("S_in", [(HALF_W, -far), (HALF_W, -h)]),
        ("S_out", [(-HALF_W, -h), (-HALF_W, -far)]),
        ("connWE", [(-h, -HALF_W), (h, -HALF_W)]),
        ("connEW", [(h, HALF_W), (-h, HALF_W)]),
        ("connWS", [(-h, -HALF_W), (-HALF_W, -HALF_W), (-HALF_W, -h)]),
        ("connSE", [(HALF_W, -h), (HALF_W, -HALF_W), (h, -HALF_W)]),
        ("connSW", [(HALF_W, -h), (HALF_W, HALF_W), (-h, HALF_W)]),
        ("connES", [(h, HALF_W), (-HALF_W, HALF_W), (-HALF_W, -h)]),
    ]
    for i, (name, pts) in enumerate(specs):
        names[name] = i
        descs.append(_lane(i, pts))
    by_name = {names[k]: d for k, d in zip([s[0] for s in specs], descs)}

    def setadj(name, successors=(), opposites=()):
        d = by_name[names[name]]
        d.successors = [names[s] for s in successors]
        d.opposites = [names[o] for o in opposites]

    setadj("W_in", successors=("connWE", "connWS"), opposites=("W_out",))
    setadj("E_in", successors=("connEW", "connES"), opposites=("E_out",))
    setadj("S_in", successors=("connSE", "connSW"), opposites=("S_out",))
    setadj("connWE", successors=("E_out",), opposites=("connEW",))
    setadj("connEW", successors=("W_out",))
    setadj("connWS", successors=("S_out",))
    setadj("connSE", successors=("E_out",))
    setadj("connSW", successors=("W_out",))
    setadj("connES", successors=("S_out",))

    template = TemplateMap("t-junction", descs, names)
    template.fwd1 = "W_in"
    template.fwd2 = None
    template.bwd = "W_out"
    template.opp_base = arm_length
    template.filler_slots = [("S_in", 0.0, 20.0)]
    return template


def crossroads(arm_length: float = 200.0) -> TemplateMap:
    """Four-arm crossroads with two lanes per direction per arm; the inner
    lanes connect straight through the junction box."""
    h = 10.0
    far = h + arm_length
    inner, outer = HALF_W, HALF_W + LANE_WIDTH
    specs = [
        ("W_in1", [(-far, -inner), (-h, -inner)]),
        ("W_in2", [(-far, -outer), (-h, -outer)]),
        ("W_out1", [(-h, inner), (-far, inner)]),
        ("W_out2", [(-h, outer), (-far, outer)]),
        ("E_in1", [(far, inner), (h, inner)]),
        ("E_in2", [(far, outer), (h, outer)]),
        ("E_out1", [(h, -inner), (far, -inner)]),
        ("E_out2", [(h, -outer), (far, -outer)]),
        ("N_in1", [(-inner, far), (-inner, h)]),
        ("N_in2", [(-outer, far), (-outer, h)]),
        ("N_out1", [(inner, h), (inner, far)]),
        ("N_out2", [(outer, h), (outer, far)]),
        ("S_in1", [(inner, -far), (inner, -h)]),
        ("S_in2", [(outer, -far), (outer, -h)]),
        ("S_out1", [(-inner, -h), (-inner, -far)]),
        ("S_out2", [(-outer, -h), (-outer, -far)]),
        ("connWE", [(-h, -inner), (h, -inner)]),
        ("connWE2", [(-h, -outer), (h, -outer)]),
        ("connEW", [(h, inner), (-h, inner)]),
        ("connEW2", [(h, outer), (-h, outer)]),
        ("connNS", [(-inner, h), (-inner, -h)]),
        ("connSN", [(inner, -h), (inner, h)]),
    ]
    names = {name: i for i, (name, _) in enumerate(specs)}
    descs = [_lane(names[name], pts) for name, pts in specs]
    by_name = {names[name]: d for (name, _), d in zip(specs, descs)}

    def setadj(name, successors=(), neighbors=(), opposites=()):
        d = by_name[names[name]]
        d.successors = [names[s] for s in successors]
        d.right_neighbors = [names[n] for n in neighbors]
        d.opposites = [names[o] for o in opposites]

    for arm in "WENS":
        setadj(f"{arm}_in1", neighbors=(f"{arm}_in2",), opposites=(f"{arm}_out1",))
        setadj(f"{arm}_out1", neighbors=(f"{arm}_out2",))
    setadj("W_in1", successors=("connWE",), neighbors=("W_in2",), opposites=("W_out1",))
    setadj("W_in2", successors=("connWE2",))
    setadj("E_in1", successors=("connEW",), neighbors=("E_in2",), opposites=("E_out1",))
    setadj("E_in2", successors=("connEW2",))
    setadj("N_in1", successors=("connNS",), neighbors=("N_in2",), opposites=("N_out1",))
    setadj("S_in1", successors=("connSN",), neighbors=("S_in2",), opposites=("S_out1",))
    setadj("connWE", successors=("E_out1",), neighbors=("connWE2",), opposites=("connEW",))
    setadj("connWE2", successors=("E_out2",))
    setadj("connEW", successors=("W_out1",), neighbors=("connEW2",))
    setadj("connEW2", successors=("W_out2",))
    setadj("connNS", successors=("S_out1",), opposites=("connSN",))
    setadj("connSN", successors=("N_out1",))

    template = TemplateMap("crossroads", descs, names)
    template.fwd1 = "W_in1"
    template.fwd2 = "W_in2"
    template.bwd = "W_out1"
    template.opp_base = arm_length
    template.filler_slots = [
        ("N_in1", 40.0, 60.0),
        ("S_in1", 40.0, 60.0),
        ("N_out1", 180.0, 200.0),
        ("S_out1", 180.0, 200.0),
        ("E_in2", 0.0, 60.0),
    ]
    return template


TEMPLATES: dict[str, Callable[[], TemplateMap]] = {
    "straight-multilane": straight_multilane,
    "t-junction": t_junction,
    "crossroads": crossroads,
}


# -- archetype placement recipes --------------------------------------------

@dataclass(frozen=True)
class Placement:
    lane: str
    s: float
    changed_lane: bool = False


def _u(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def _base_recipes(t: TemplateMap, rng: np.random.Generator,
                  name: str) -> list[Placement] | None:
    """Recipes that only need the straight base site (no intersections).

    Placement windows keep the planted pattern's direct relations strictly
    closest, so hierarchical construction cannot reject a required edge.
    """
    f1, f2, bwd, base = t.fwd1, t.fwd2, t.bwd, t.opp_base
    if name == "simple_following":
        s0 = _u(rng, 10, 40)
        return [Placement(f1, s0), Placement(f1, s0 + _u(rng, 15, 35))]
    if name == "simple_opposite":
        s0 = _u(rng, 10, 40)
        return [Placement(f1, s0), Placement(bwd, base - s0 - _u(rng, 10, 50))]
    if name == "simple_neighbor":
        s0 = _u(rng, 35, 60)
        return [Placement(f1, s0), Placement(f2, s0 + _u(rng, -30, 30))]
    if name in ("cut_in", "lead_following_back"):
        s0 = _u(rng, 5, 15)
        g1, g2 = _u(rng, 15, 35), _u(rng, 15, 35)
        return [Placement(f1, s0),
                Placement(f1, s0 + g1, changed_lane=(name == "cut_in")),
                Placement(f1, s0 + g1 + g2)]
    if name == "lead_neighbor":
        s0 = _u(rng, 20, 80)
        return [Placement(f1, s0), Placement(f1, s0 + _u(rng, 25, 45)),
                Placement(f2, s0 + _u(rng, -10, 10))]
    if name == "cut_out":
        s0 = _u(rng, 20, 60)
        delta = _u(rng, 3, 8)
        return [Placement(f1, s0), Placement(f1, s0 + _u(rng, 30, 40)),
                Placement(f2, s0 + delta, changed_lane=True),
                Placement(f2, s0 + delta + _u(rng, 45, 55))]
    if name == "lead_neighbor_opposite":
        s0 = _u(rng, 30, 80)
        g1 = _u(rng, 25, 35)
        return [Placement(f1, s0), Placement(f1, s0 + g1),
                Placement(f1, s0 + g1 + _u(rng, 20, 30)),
                Placement(f2, s0 + _u(rng, 3, 8)),
                Placement(bwd, base - s0 - _u(rng, 8, 15))]
    return None


def _crossing_recipes(t: TemplateMap, rng: np.random.Generator,
                      name: str) -> list[Placement] | None:
    """Recipes that route the pattern across the junction box.

    Works for any template exposing W_in1/connWE/E_out1/connEW; distances
    are tuned against the discovery limits so the designated relations
    survive construction (see the tight A-B/A-C windows in the triple
    opposite recipe in particular).
    """
    lanes = t.lane_ids
    single_arm = "W_in" in lanes  # t-junction naming
    w_in = "W_in" if single_arm else "W_in1"
    e_out = "E_out" if single_arm else "E_out1"
    arm = t.opp_base
    if {w_in, "connWE", e_out, "connEW"} - set(lanes):
        return None

    if name in ("platoon_intersection", "cut_in_intersection"):
        return [Placement(w_in, arm - _u(rng, 11, 19)),
                Placement("connWE", _u(rng, 8, 12),
                          changed_lane=(name == "cut_in_intersection")),
                Placement(e_out, _u(rng, 11, 19))]
    if name == "four_platoon_intersection":
        return [Placement(w_in, arm - _u(rng, 36, 44)),
                Placement("connWE", _u(rng, 8, 12)),
                Placement(e_out, _u(rng, 12, 18)),
                Placement(e_out, _u(rng, 37, 44))]
    if name == "opposite_traffic_intersection":
        s_e = _u(rng, 8, 12)
        x_e = s_e - 10.0
        return [Placement("connWE", s_e),
                Placement(e_out, _u(rng, 11, 19)),
                Placement("connEW", 10.0 - (x_e + _u(rng, 4, 8)))]
    if name == "four_opposite_intersection":
        s3 = _u(rng, 8, 12)
        x3 = s3 - 10.0
        return [Placement(w_in, arm - _u(rng, 47, 53)),
                Placement(w_in, arm - _u(rng, 22, 28)),
                Placement("connWE", s3),
                Placement("connEW", 10.0 - (x3 + _u(rng, 4, 8)))]
    if name == "triple_opposite_intersection":
        s_b = _u(rng, 4, 5)
        s_c = _u(rng, 3, 4)
        d_ab = _u(rng, 94, 96)
        s_a = arm + 20.0 - s_b - d_ab
        return [Placement(w_in, s_a), Placement("connEW", s_b), Placement(e_out, s_c)]

    # the remaining intersection recipes need the outer connector lanes
    if {"connWE2", "E_out2", "W_in2"} - set(lanes):
        return None
    if name == "lead_neighbor_intersection":
        return [Placement("connWE", _u(rng, 8, 12)),
                Placement(e_out, _u(rng, 11, 19)),
                Placement("W_in2", arm - _u(rng, 15, 21))]
    if name == "lead_neighbor_at_intersection":
        s_e = _u(rng, 4, 7)
        s_n = s_e + _u(rng, 1, 3)
        return [Placement("connWE", s_n + _u(rng, 7, 9)),
                Placement("connWE", s_e),
                Placement("connWE2", s_n)]
    if name == "cut_out_intersection":
        return [Placement(w_in, arm - _u(rng, 2, 4)),
                Placement("connWE", _u(rng, 16, 18)),
                Placement("connWE2", _u(rng, 2, 4), changed_lane=True),
                Placement("E_out2", _u(rng, 8, 12))]
    if name == "lead_neighbor_opposite_intersection":
        s_e = _u(rng, 8, 12)
        x_e = s_e - 10.0
        return [Placement("connWE", s_e),
                Placement(e_out, _u(rng, 11, 15)),
                Placement(e_out, _u(rng, 35, 41)),
                Placement("connWE2", s_e + _u(rng, 1, 3)),
                Placement("connEW", 10.0 - (x_e + _u(rng, 4, 7)))]
    return None


def place_archetype(template: TemplateMap, rng: np.random.Generator,
                    name: str) -> list[Placement]:
    if template.fwd1 is not None:
        placements = _base_recipes(template, rng, name)
        if placements is not None:
            if any(p.lane is None for p in placements):
                raise ConfigError(f"archetype {name} infeasible on {template.name}")
            return placements
    placements = _crossing_recipes(template, rng, name)
    if placements is None:
        raise ConfigError(f"archetype {name} infeasible on template {template.name}")
    return placements


def supported_archetypes(template: TemplateMap) -> list[str]:
    probe = np.random.default_rng(0)
    names = [
        "simple_following", "simple_opposite", "simple_neighbor",
        "lead_neighbor_intersection", "cut_in", "cut_in_intersection",
        "platoon_intersection", "opposite_traffic_intersection",
        "lead_neighbor_at_intersection", "triple_opposite_intersection",
        "lead_following_back", "lead_neighbor", "cut_out", "cut_out_intersection",
        "four_platoon_intersection", "four_opposite_intersection",
        "lead_neighbor_opposite", "lead_neighbor_opposite_intersection",
    ]
    out = []
    for name in names:
        try:
            place_archetype(template, probe, name)
        except ConfigError:
            continue
        out.append(name)
    return out


# -- scene generation --------------------------------------------------------

@dataclass
class SynthSpec:
    """Configuration for synthetic scene generation."""

    map_template: str = "crossroads"
    n_scenes: int = 50
    actor_count: tuple[int, int] = (2, 8)
    archetype_weights: dict[str, float] | None = None
    speed_mean: float = 9.0
    speed_std: float = 3.0
    seed: int = 0
    label: str = "REF"

    def __post_init__(self):
        if self.map_template not in TEMPLATES:
            raise ConfigError(f"unknown map template {self.map_template!r}",
                              field="synth.map_template")
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1", field="synth.n_scenes")
        lo, hi = self.actor_count
        if hi < 2 or lo > hi or lo < 0:
            raise ConfigError("actor_count range must allow at least 2 actors",
                              field="synth.actor_count")
        if self.archetype_weights is not None:
            if any(w < 0 for w in self.archetype_weights.values()):
                raise ConfigError("archetype weights must be >= 0",
                                  field="synth.archetype_weights")
            if sum(self.archetype_weights.values()) <= 0:
                raise ConfigError("archetype weights must sum to > 0",
                                  field="synth.archetype_weights")

    def to_dict(self) -> dict:
        return {
            "map_template": self.map_template,
            "n_scenes": self.n_scenes,
            "actor_count": list(self.actor_count),
            "archetype_weights": self.archetype_weights,
            "speed_mean": self.speed_mean,
            "speed_std": self.speed_std,
            "seed": self.seed,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        known = {"map_template", "n_scenes", "actor_count", "archetype_weights",
                 "speed_mean", "speed_std", "seed", "label"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synth parameters: {sorted(unknown)}")
        data = dict(data)
        if "actor_count" in data:
            data["actor_count"] = tuple(data["actor_count"])
        return cls(**data)


@dataclass
class SynthResult:
    template: TemplateMap
    map_graph: LaneMapGraph
    scene_set: SceneSet
    truth: list[tuple[str, str]]  # (scene_id, planted archetype)


def _speed(rng: np.random.Generator, spec: SynthSpec) -> float:
    return max(0.25, float(rng.normal(spec.speed_mean, spec.speed_std)))


def generate_synthetic(spec: SynthSpec) -> SynthResult:
    """Generate a SceneSet of planted-archetype scenes plus the map.

    Each scene realizes one archetype drawn from the weight table; filler
    actors (when the actor count target exceeds the pattern size) occupy
    far-away slots that cannot interact with the cluster or each other.
    """
    template = TEMPLATES[spec.map_template]()
    map_graph = template.build()
    available = supported_archetypes(template)
    if spec.archetype_weights is None:
        weights = {name: 1.0 for name in available}
    else:
        unknown = set(spec.archetype_weights) - set(available)
        if unknown:
            raise ConfigError(
                f"archetypes not plantable on {spec.map_template}: {sorted(unknown)}",
                field="synth.archetype_weights")
        weights = {k: v for k, v in spec.archetype_weights.items() if v > 0}
    names = sorted(weights)
    probabilities = np.array([weights[n] for n in names])
    probabilities = probabilities / probabilities.sum()

    rng = np.random.default_rng(spec.seed)
    scenes: list[Scene] = []
    truth: list[tuple[str, str]] = []
    for i in range(spec.n_scenes):
        archetype = names[int(rng.choice(len(names), p=probabilities))]
        placements = place_archetype(template, rng, archetype)
        target = int(rng.integers(spec.actor_count[0], spec.actor_count[1] + 1))
        capacity = len(placements) + len(template.filler_slots)
        if spec.actor_count[0] > capacity:
            raise ConfigError(
                f"actor_count asks for {spec.actor_count[0]} actors but "
                f"{archetype} on {spec.map_template} supports at most {capacity}")
        n_fillers = min(max(target - len(placements), 0), len(template.filler_slots))
        slots = list(template.filler_slots)
        chosen = rng.permutation(len(slots))[:n_fillers]
        for slot_idx in sorted(int(c) for c in chosen):
            lane, lo, hi = slots[slot_idx]
            placements.append(Placement(lane, _u(rng, lo, hi)))

        actors = []
        for k, placement in enumerate(placements):
            lane = map_graph.lane(template.lane_ids[placement.lane])
            s = min(max(placement.s, 0.0), lane.length_m)
            point, _ = point_at_arc_length(lane.centerline, s)
            actors.append(ActorState(
                actor_id=f"a{k}",
                primary_lane=lane.id,
                lane_ids=(lane.id,),
                s_m=s,
                position=(float(point[0]), float(point[1]), float(point[2])),
                long_speed_mps=_speed(rng, spec),
                actor_type=ActorType.VEHICLE,
                changed_lane=placement.changed_lane,
            ))
        scene_id = f"{spec.label.lower()}-{i:04d}"
        scenes.append(Scene(scene_id, template.name, 0.0, tuple(actors),
                            source_tag=f"synth-{spec.map_template}"))
        truth.append((scene_id, archetype))
    scene_set = SceneSet(tuple(scenes), label=spec.label)
    return SynthResult(template, map_graph, scene_set, truth)
