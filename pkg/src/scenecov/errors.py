"""Exception hierarchy shared across the package.

All errors raised for bad user input derive from SceneCovError so the CLI
can map them to a user-error exit code; anything else is treated as an
internal failure.
"""

from __future__ import annotations


class SceneCovError(Exception):
    """Base class for all recoverable, user-facing errors."""


class MapFormatError(SceneCovError):
    """Invalid lane map input (dangling references, empty map, bad geometry)."""

    def __init__(self, message: str, lane_id: int | None = None):
        super().__init__(message)
        self.lane_id = lane_id


class SceneFormatError(SceneCovError):
    """Invalid scene interchange record.

    Carries the offending record position so callers can report
    "scene 3, actor 7, field actor_type" style messages.
    """

    def __init__(self, message: str, scene_index: int | None = None,
                 actor_index: int | None = None, field: str | None = None):
        super().__init__(message)
        self.scene_index = scene_index
        self.actor_index = actor_index
        self.field = field


class UnmappableActorError(SceneCovError):
    """No lane could be assigned to an actor pose."""

    def __init__(self, message: str, actor_id: str | None = None):
        super().__init__(message)
        self.actor_id = actor_id


class ArchetypeFormatError(SceneCovError):
    """Invalid archetype pattern definition."""


class ConfigError(SceneCovError):
    """Invalid run configuration.

    `field` holds the dotted path of the offending key when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
