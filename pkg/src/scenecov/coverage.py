"""Coverage gap analytics between a TEST and a REF scene set.

Three complementary views over coverage tables: per-archetype structural
coverage deltas, histogram-based parametric holes, and co-occurrence
difference matrices. All functions are pure over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .archetypes import CoverageTable
from .errors import SceneCovError

# A histogram bin is a definition hole when the reference has at least this
# density and the test side falls below this ratio of it.
MIN_REF_DENSITY = 0.005
MAX_TEST_RATIO = 0.15

DEFAULT_SPEED_BIN_M_S = 1.0
DEFAULT_PATH_LENGTH_BIN_M = 5.0


@dataclass(frozen=True)
class StructuralRow:
    archetype: str
    coverage_ref_pct: float
    coverage_test_pct: float
    delta_pp: float

    @property
    def mean_coverage_pct(self) -> float:
        return 0.5 * (self.coverage_ref_pct + self.coverage_test_pct)


@dataclass(frozen=True)
class StructuralReport:
    rows: tuple[StructuralRow, ...]

    def by_name(self, name: str) -> StructuralRow:
        for row in self.rows:
            if row.archetype == name:
                return row
        raise KeyError(name)


def structural_coverage(table_ref: CoverageTable, table_test: CoverageTable) -> StructuralReport:
    """Per-archetype scene coverage in both sets and the ref-test delta.

    Rows are sorted by mean coverage across both datasets, descending,
    with the archetype name as tie-break.
    """
    if table_ref.archetypes != table_test.archetypes:
        raise SceneCovError("coverage tables have different archetype columns")
    rows = []
    for name in table_ref.archetypes:
        ref_pct = table_ref.coverage_percent(name)
        test_pct = table_test.coverage_percent(name)
        rows.append(StructuralRow(name, ref_pct, test_pct, ref_pct - test_pct))
    rows.sort(key=lambda r: (-r.mean_coverage_pct, r.archetype))
    return StructuralReport(tuple(rows))


@dataclass(frozen=True)
class ParametricHoles:
    """Shared-bin histogram comparison of one scalar attribute."""

    bin_edges: tuple[float, ...]
    ref_density: tuple[float, ...]
    test_density: tuple[float, ...]
    hole_flags: tuple[bool, ...]

    @property
    def n_bins(self) -> int:
        return len(self.hole_flags)

    @property
    def hole_bins(self) -> tuple[tuple[float, float], ...]:
        return tuple((self.bin_edges[i], self.bin_edges[i + 1])
                     for i, flag in enumerate(self.hole_flags) if flag)


def detect_parametric_holes(ref_samples: Sequence[float], test_samples: Sequence[float],
                            bin_width: float,
                            min_ref_density: float = MIN_REF_DENSITY,
                            max_ratio: float = MAX_TEST_RATIO) -> ParametricHoles:
    """Flag bins where the reference has real density but the test does not.

    Both sample sets share one binning spanning their union range, aligned
    to multiples of bin_width. A bin is a hole iff the reference density is
    at least min_ref_density and the test density is below max_ratio times
    the reference density. An empty test set makes every qualifying
    reference bin a hole; an empty reference set is an error.
    """
    ref = np.asarray(ref_samples, dtype=np.float64)
    test = np.asarray(test_samples, dtype=np.float64)
    if ref.size == 0:
        raise SceneCovError("reference sample set is empty")
    if bin_width <= 0:
        raise SceneCovError("bin_width must be positive")
    lo = min(ref.min(), test.min() if test.size else ref.min())
    hi = max(ref.max(), test.max() if test.size else ref.max())
    first = math.floor(lo / bin_width)
    last = math.floor(hi / bin_width) + 1
    edges = np.arange(first, last + 1) * bin_width
    if len(edges) < 2:
        edges = np.array([first * bin_width, (first + 1) * bin_width])
    ref_counts, _ = np.histogram(ref, bins=edges)
    ref_density = ref_counts / ref.size
    if test.size:
        test_counts, _ = np.histogram(test, bins=edges)
        test_density = test_counts / test.size
    else:
        test_density = np.zeros(len(edges) - 1)
    flags = (ref_density >= min_ref_density) & (test_density < max_ratio * ref_density)
    return ParametricHoles(
        bin_edges=tuple(float(e) for e in edges),
        ref_density=tuple(float(d) for d in ref_density),
        test_density=tuple(float(d) for d in test_density),
        hole_flags=tuple(bool(f) for f in flags),
    )


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Percent of scenes in which each archetype pair matched together.

    Symmetric; the diagonal equals per-archetype coverage.
    """

    archetypes: tuple[str, ...]
    values: np.ndarray  # (n, n) percent

    def cell(self, a: str, b: str) -> float:
        i = self.archetypes.index(a)
        j = self.archetypes.index(b)
        return float(self.values[i, j])


def cooccurrence(table: CoverageTable) -> CooccurrenceMatrix:
    names = table.archetypes
    n = len(names)
    scenes = max(table.n_scenes, 1)
    hits = np.array([[row[name] for name in names] for row in table.hits], dtype=bool) \
        if table.n_scenes else np.zeros((0, n), dtype=bool)
    joint = hits.T.astype(np.float64) @ hits.astype(np.float64) if table.n_scenes \
        else np.zeros((n, n))
    return CooccurrenceMatrix(names, 100.0 * joint / scenes)


def cooccurrence_diff(ref: CooccurrenceMatrix, test: CooccurrenceMatrix) -> CooccurrenceMatrix:
    """Elementwise ref minus test, in percentage points."""
    if ref.archetypes != test.archetypes:
        raise SceneCovError("co-occurrence matrices cover different archetypes")
    return CooccurrenceMatrix(ref.archetypes, ref.values - test.values)


def role_sample_sets(table: CoverageTable, archetype: str) -> dict[str, list[float]]:
    """All matched per-role speed samples for one archetype across scenes."""
    samples: dict[str, list[float]] = {}
    for row in table.role_speeds:
        per_role = row.get(archetype, {})
        for role, values in per_role.items():
            samples.setdefault(role, []).extend(values)
    return samples


def path_length_samples(table: CoverageTable, archetype: str) -> list[float]:
    out: list[float] = []
    for row in table.path_lengths:
        out.extend(row.get(archetype, ()))
    return out
