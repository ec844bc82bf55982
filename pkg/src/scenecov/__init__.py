"""scenecov: graph-based traffic scene coverage analysis.

Builds hierarchical traffic scene graphs from lane maps and actor
snapshots, measures archetype coverage via subgraph matching, detects
coverage gaps between datasets, and embeds scenes with a contrastively
trained GINE encoder.
"""

__version__ = "0.1.0"

from .actor_graph import (
    ActorEdge,
    ActorGraph,
    ActorNode,
    ConstructionParams,
    DiscoveredRelation,
    RelationKind,
    RelationType,
    build_actor_graph,
    build_scene_graphs,
    discover_relations,
)
from .archetypes import (
    Archetype,
    ArchetypeCatalog,
    MatchPolicy,
    MatchResult,
    build_coverage_table,
    default_catalog,
    match,
    node_coverage,
)
from .coverage import (
    cooccurrence,
    cooccurrence_diff,
    detect_parametric_holes,
    structural_coverage,
)
from .errors import SceneCovError
from .lane_map import (
    Lane,
    LaneDescription,
    LaneMapGraph,
    LanePath,
    MapEdgeType,
    PathPattern,
    build_map,
    find_lane_path,
    mark_intersections,
    path_length_between,
)
from .scene_model import ActorState, ActorType, Scene, SceneSet, assign_lanes
