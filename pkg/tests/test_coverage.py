"""Structural deltas, parametric holes, co-occurrence algebra."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenecov.archetypes import CoverageTable
from scenecov.coverage import (
    cooccurrence,
    cooccurrence_diff,
    detect_parametric_holes,
    structural_coverage,
)
from scenecov.errors import SceneCovError

from oracles import oracle_hole_flags


def table_from_bool(matrix, names, label="REF"):
    """Boolean hit matrix -> minimal CoverageTable."""
    n_scenes = len(matrix)
    return CoverageTable(
        label=label,
        scene_ids=tuple(f"s{i}" for i in range(n_scenes)),
        archetypes=tuple(names),
        hits=[{name: bool(v) for name, v in zip(names, row)} for row in matrix],
        counts=[{name: int(v) for name, v in zip(names, row)} for row in matrix],
        capped=[{name: False for name in names} for _ in range(n_scenes)],
        role_speeds=[{} for _ in range(n_scenes)],
        path_lengths=[{} for _ in range(n_scenes)],
        n_nodes=tuple(3 for _ in range(n_scenes)),
        covered_nodes=tuple(0 for _ in range(n_scenes)),
    )


class TestStructural:
    def test_identical_tables_zero_delta(self):
        table = table_from_bool([[1, 0], [0, 1], [1, 1]], ["x", "y"])
        report = structural_coverage(table, table)
        assert all(r.delta_pp == 0.0 for r in report.rows)

    def test_full_gap_is_100_points(self):
        ref = table_from_bool([[1], [1], [1]], ["x"])
        test = table_from_bool([[0], [0]], ["x"], label="TEST")
        report = structural_coverage(ref, test)
        assert report.by_name("x").delta_pp == pytest.approx(100.0)

    def test_hand_counted_deltas(self):
        rng = np.random.default_rng(0)
        names = ["a", "b", "c"]
        m_ref = (rng.random((20, 3)) < 0.5).astype(int)
        m_test = (rng.random((20, 3)) < 0.3).astype(int)
        report = structural_coverage(table_from_bool(m_ref, names),
                                     table_from_bool(m_test, names, "TEST"))
        for j, name in enumerate(names):
            expected = 100.0 * (m_ref[:, j].sum() - m_test[:, j].sum()) / 20
            assert report.by_name(name).delta_pp == pytest.approx(expected)

    def test_sorted_by_mean_coverage(self):
        ref = table_from_bool([[1, 0, 1], [1, 0, 0]], ["a", "b", "c"])
        test = table_from_bool([[1, 1, 0], [1, 0, 0]], ["a", "b", "c"], "TEST")
        report = structural_coverage(ref, test)
        means = [r.mean_coverage_pct for r in report.rows]
        assert means == sorted(means, reverse=True)

    def test_column_mismatch(self):
        ref = table_from_bool([[1]], ["a"])
        test = table_from_bool([[1]], ["b"], "TEST")
        with pytest.raises(SceneCovError):
            structural_coverage(ref, test)


class TestParametricHoles:
    def test_identical_sets_no_holes(self):
        samples = list(np.random.default_rng(1).normal(10, 2, 500))
        holes = detect_parametric_holes(samples, samples, 1.0)
        assert not any(holes.hole_flags)

    def test_disjoint_supports(self):
        rng = np.random.default_rng(2)
        ref = list(rng.uniform(10, 15, 400))
        test = list(rng.uniform(0, 5, 400))
        holes = detect_parametric_holes(ref, test, 1.0)
        flagged = holes.hole_bins
        assert len(flagged) == 5
        assert flagged[0][0] == pytest.approx(10.0)
        assert flagged[-1][1] == pytest.approx(15.0)

    def test_thresholds_against_counting_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            ref = list(rng.normal(12, 2, 1000))
            test = list(rng.normal(6, 1, 1000))
            holes = detect_parametric_holes(ref, test, 1.0)
            edges, flags = oracle_hole_flags(ref, test, 1.0, 0.005, 0.15)
            assert list(holes.hole_flags) == flags
            assert list(holes.bin_edges) == pytest.approx(edges)

    def test_densities_sum_to_one(self):
        rng = np.random.default_rng(4)
        holes = detect_parametric_holes(list(rng.normal(5, 1, 300)),
                                        list(rng.normal(7, 1, 200)), 0.5)
        assert sum(holes.ref_density) == pytest.approx(1.0, abs=1e-9)
        assert sum(holes.test_density) == pytest.approx(1.0, abs=1e-9)

    def test_empty_ref_is_error(self):
        with pytest.raises(SceneCovError):
            detect_parametric_holes([], [1.0], 1.0)

    def test_empty_test_all_qualifying_bins_are_holes(self):
        ref = [1.0] * 100 + [5.0] * 100
        holes = detect_parametric_holes(ref, [], 1.0)
        for flag, density in zip(holes.hole_flags, holes.ref_density):
            assert flag == (density >= 0.005)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), ratio_lo=st.floats(0.01, 0.2),
           ratio_hi=st.floats(0.2, 0.9))
    def test_monotone_in_max_ratio(self, seed, ratio_lo, ratio_hi):
        rng = np.random.default_rng(seed)
        ref = list(rng.normal(10, 3, 200))
        test = list(rng.normal(8, 3, 150))
        low = detect_parametric_holes(ref, test, 1.0, max_ratio=ratio_lo)
        high = detect_parametric_holes(ref, test, 1.0, max_ratio=ratio_hi)
        for flag_low, flag_high in zip(low.hole_flags, high.hole_flags):
            assert flag_high or not flag_low

    def test_order_and_duplication_invariance(self):
        rng = np.random.default_rng(6)
        ref = list(rng.normal(10, 2, 300))
        test = list(rng.normal(9, 2, 300))
        base = detect_parametric_holes(ref, test, 1.0)
        shuffled = detect_parametric_holes(list(reversed(ref)), list(reversed(test)), 1.0)
        doubled = detect_parametric_holes(ref * 2, test * 2, 1.0)
        assert base.hole_flags == shuffled.hole_flags == doubled.hole_flags


class TestCooccurrence:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), n_scenes=st.integers(1, 40),
           n_arch=st.integers(1, 8))
    def test_algebra(self, seed, n_scenes, n_arch):
        rng = np.random.default_rng(seed)
        names = [f"t{i}" for i in range(n_arch)]
        matrix = (rng.random((n_scenes, n_arch)) < 0.5).astype(int)
        table = table_from_bool(matrix, names)
        co = cooccurrence(table)
        assert np.allclose(co.values, co.values.T)
        for j, name in enumerate(names):
            assert co.values[j, j] == pytest.approx(table.coverage_percent(name))
        diff = cooccurrence_diff(co, co)
        assert np.allclose(diff.values, 0.0)

    def test_never_comatched_off_diagonal_zero(self):
        table = table_from_bool([[1, 0], [0, 1]], ["a", "b"])
        co = cooccurrence(table)
        assert co.cell("a", "b") == 0.0

    def test_always_matched_row_equals_coverage(self):
        table = table_from_bool([[1, 1], [1, 0], [1, 1]], ["a", "b"])
        co = cooccurrence(table)
        assert co.cell("a", "b") == pytest.approx(table.coverage_percent("b"))

    def test_hand_computed(self):
        matrix = [[1, 1, 0], [1, 0, 0], [0, 1, 1], [1, 1, 0]]
        table = table_from_bool(matrix, ["a", "b", "c"])
        co = cooccurrence(table)
        assert co.cell("a", "b") == pytest.approx(100.0 * 2 / 4)
        assert co.cell("b", "c") == pytest.approx(100.0 * 1 / 4)
        assert co.cell("a", "c") == 0.0
