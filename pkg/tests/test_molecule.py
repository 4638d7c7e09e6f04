"""
Tests for the polygon shrinking engine.
"""
import json
import math

import numpy as np
import pytest

from libs.crease import EdgeKind, NodeKind, find_crossings, serialize
from libs.errors import (ConfigError, MaxEventsExceeded, NumericalDegeneracyError, OffsetInversionError,
                         PolygonError, ShrinkError, StaleEventError)
from libs.landmarks import generate_synthetic_face
from libs.lang_polygon import LangPolygon, build_lang_polygon
from libs.molecule import (ActivePolygon, EventKind, ShrinkConfig, ShrinkEvent, apply_contraction,
                           apply_split, chord_fractions, detect_contraction, detect_split,
                           offset_step, shrink)
from libs.shadow_tree import build_shadow_tree
from tests.conftest import random_tree, star_tree

UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def hexagon():
    return [(math.cos(math.pi * k / 3), math.sin(math.pi * k / 3)) for k in range(6)]


def regular_polygon(p, margin=0.05):
    """Regular p-gon around the origin satisfying the Lang condition for star_tree(p)."""
    radius = (1.0 + margin) / math.sin(math.pi / p)
    positions = tuple((radius * math.cos(2 * math.pi * k / p), radius * math.sin(2 * math.pi * k / p))
                      for k in range(p))
    xs, ys = zip(*positions)
    return LangPolygon(tuple(range(p)), positions, 1.0, max(xs) - min(xs), max(ys) - min(ys))


def assert_well_formed(result, tree):
    """Structural invariants every completed run must satisfy."""
    counts = result.event_counts()
    assert counts['terminal'] == counts['split'] + 1
    assert frozenset().union(*result.terminals) == frozenset(range(tree.leaf_count))
    depths = [event.depth for event in result.events]
    assert depths == sorted(depths)
    for event in result.events:
        if event.kind == EventKind.CONTRACTION:
            assert len(event.vertices) == 2
        if event.kind == EventKind.SPLIT:
            assert list(event.intermediates) == tree.path(*event.leaves)[1:-1]
    assert result.pattern.count_nodes(NodeKind.BOUNDARY_LEAF) == tree.leaf_count
    assert find_crossings(result.pattern, tol=10.0 * result.config.th) == []


def first_hit_by_stepping(poly, tree, th, step):
    """Depth of the first grid point at which a contraction or split condition holds."""
    active = ActivePolygon.from_points(poly.points, poly.leaves)
    while True:
        if detect_contraction(active, th) or detect_split(active, tree, th):
            return active.depth
        try:
            active = offset_step(active, step)
        except (OffsetInversionError, NumericalDegeneracyError):
            return active.depth + step


class TestShrinkConfig:
    """Derived defaults and validation."""

    def test_defaults_from_polygon(self, face_tree):
        """Test th, step and max_events scale with the polygon."""
        poly = build_lang_polygon(face_tree)
        cfg = ShrinkConfig().resolve(poly)
        assert cfg.th == pytest.approx(1e-6 * poly.bbox_diagonal())
        assert cfg.step == pytest.approx(poly.perimeter() / 2000.0)
        assert cfg.max_events == 8 * 37
        assert cfg.refine_tol < cfg.th

    def test_unknown_tree_metric(self, face_tree):
        """Test only reduced and fixed metrics are accepted."""
        with pytest.raises(ConfigError):
            ShrinkConfig(tree_metric='shrinking').resolve(build_lang_polygon(face_tree))

    def test_refine_tol_must_be_below_th(self, face_tree):
        """Test an explicit th no larger than refine_tol is rejected."""
        with pytest.raises(ConfigError):
            ShrinkConfig(th=1e-9, refine_tol=1e-9).resolve(build_lang_polygon(face_tree))

    def test_non_positive_step(self, face_tree):
        """Test a zero step is rejected."""
        with pytest.raises(ConfigError):
            ShrinkConfig(step=0.0).resolve(build_lang_polygon(face_tree))

    def test_from_dict(self):
        """Test construction from a config section."""
        cfg = ShrinkConfig.from_dict({'th': 1e-5, 'refine_tol': 1e-8, 'tree_metric': 'fixed'})
        assert cfg.th == 1e-5
        assert cfg.step is None
        assert cfg.tree_metric == 'fixed'


class TestOffset:
    """Inward offsetting of an active polygon."""

    @pytest.mark.parametrize('points', [UNIT_SQUARE, UNIT_SQUARE[::-1]])
    def test_square_inset(self, points):
        """Test both orientations inset toward the interior."""
        moved = offset_step(ActivePolygon.from_points(points), 0.1)
        expected = [(0.1 if x == 0.0 else 0.9, 0.1 if y == 0.0 else 0.9) for x, y in points]
        np.testing.assert_allclose(moved.points, expected, atol=1e-12)
        assert moved.depth == pytest.approx(0.1)

    def test_zero_offset_is_identity(self):
        """Test a zero offset returns the polygon unchanged."""
        poly = ActivePolygon.from_points(UNIT_SQUARE)
        assert offset_step(poly, 0.0) is poly

    def test_inversion(self):
        """Test offsetting past the collapse depth is refused."""
        with pytest.raises(OffsetInversionError):
            offset_step(ActivePolygon.from_points(UNIT_SQUARE), 0.6)

    def test_negative_offset(self):
        """Test negative offsets are rejected."""
        with pytest.raises(ShrinkError):
            offset_step(ActivePolygon.from_points(UNIT_SQUARE), -0.1)

    def test_degenerate_polygons(self):
        """Test too few or coincident vertices are rejected."""
        with pytest.raises(PolygonError):
            ActivePolygon.from_points([(0.0, 0.0), (1.0, 0.0)])
        with pytest.raises(PolygonError):
            ActivePolygon.from_points([(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)])


class TestEvents:
    """Event detection and application on hand-built polygons."""

    def test_detect_contraction(self):
        """Test a short edge is reported as a contraction."""
        poly = ActivePolygon.from_points([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (5e-7, 1.0), (0.0, 1.0)])
        events = detect_contraction(poly, 1e-6)
        assert [e.vertices for e in events] == [(3, 4)]
        assert events[0].leaves == (3, 4)
        assert detect_contraction(ActivePolygon.from_points(UNIT_SQUARE), 1e-6) == []

    def test_apply_contraction(self):
        """Test two vertices merge at their midpoint with the union of leaves."""
        poly = ActivePolygon.from_points([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (5e-7, 1.0), (0.0, 1.0)])
        event = detect_contraction(poly, 1e-6)[0]
        merged = apply_contraction(poly, event, th=1e-6)
        assert merged.size == 4
        assert merged.vertices[3].leaves == frozenset({3, 4})
        assert merged.vertices[3].position == pytest.approx((2.5e-7, 1.0))
        assert merged.tangents[3] == pytest.approx((0.0, -1.0))

    def test_apply_contraction_across_the_seam(self):
        """Test merging the last and first vertices keeps every tangent on its own edge."""
        poly = ActivePolygon.from_points([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 5e-7)])
        event = detect_contraction(poly, 1e-6)[0]
        assert event.vertices == (4, 0)
        merged = apply_contraction(poly, event, th=1e-6)
        assert merged.size == 4
        assert merged.vertices[0].leaves == frozenset({0, 4})
        assert merged.vertices[0].position == pytest.approx((0.0, 2.5e-7))
        np.testing.assert_allclose(merged.tangents, [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)])
        np.testing.assert_allclose(merged.signed_lengths(), [1.0, 1.0, 1.0, 1.0 - 2.5e-7], atol=1e-12)

    def test_contraction_must_be_consecutive(self):
        """Test a non-consecutive contraction is stale."""
        poly = ActivePolygon.from_points(UNIT_SQUARE)
        event = ShrinkEvent(EventKind.CONTRACTION, 0.0, 0, (0, 2))
        with pytest.raises(StaleEventError):
            apply_contraction(poly, event)

    def test_detect_split_on_hexagon(self):
        """Test every non-adjacent pair of a unit hexagon is within a star tree's distance."""
        tree = star_tree(6)
        events = detect_split(ActivePolygon.from_points(hexagon()), tree, 1e-6)
        assert len(events) == 9
        assert all(e.kind == EventKind.SPLIT for e in events)
        wide = ActivePolygon.from_points([(3 * x, 3 * y) for x, y in hexagon()])
        assert detect_split(wide, tree, 1e-6, 'fixed') == []

    def test_apply_split(self):
        """Test a split along a long diagonal yields two quadrilaterals sharing the chord."""
        tree = star_tree(6)
        poly = ActivePolygon.from_points(hexagon())
        event = ShrinkEvent(EventKind.SPLIT, 0.0, 0, (0, 3), (0, 3))
        first, second = apply_split(poly, event, tree, th=1e-6)
        assert first.size == 4 and second.size == 4
        assert [v.uid for v in first.vertices] == [0, 1, 2, 3]
        assert [v.uid for v in second.vertices] == [3, 4, 5, 0]
        assert first.tangents[-1] == pytest.approx((1.0, 0.0))
        assert second.tangents[-1] == pytest.approx((-1.0, 0.0))
        assert first.parent == 0 and second.parent == 0

    def test_split_adjacent_endpoints(self):
        """Test adjacent endpoints cannot split."""
        event = ShrinkEvent(EventKind.SPLIT, 0.0, 0, (0, 1), (0, 1))
        with pytest.raises(ShrinkError):
            apply_split(ActivePolygon.from_points(hexagon()), event, star_tree(6))

    def test_chord_fractions(self):
        """Test intermediate nodes sit at path-distance fractions."""
        assert chord_fractions(star_tree(6), [0, 6, 3]) == pytest.approx([0.5])


class TestShrink:
    """Full engine runs."""

    def test_square_star_collapses_to_centre(self):
        """Test a 4-leaf star shrinks to one terminal at the square's centre."""
        tree = star_tree(4)
        poly = build_lang_polygon(tree)
        result = shrink(poly, tree)
        counts = result.event_counts()
        assert counts['split'] == 0
        assert counts['terminal'] == 1
        terminals = [n for n in result.pattern.nodes if n.kind == NodeKind.TERMINAL]
        assert len(terminals) == 1
        assert terminals[0].point == pytest.approx((poly.width / 2, poly.height / 2), abs=1e-6)
        assert result.events[-1].depth == pytest.approx(poly.width / 2, abs=1e-5)

    def test_fixed_metric_square(self):
        """Test the fixed tree metric splits the square along a diagonal through the hub."""
        tree = star_tree(4)
        result = shrink(build_lang_polygon(tree), tree, ShrinkConfig(tree_metric='fixed'))
        counts = result.event_counts()
        assert counts['split'] >= 1
        assert counts['terminal'] == counts['split'] + 1
        first_split = next(e for e in result.events if e.kind == EventKind.SPLIT)
        assert first_split.intermediates == (4,)

    @pytest.mark.parametrize('p', [3, 4, 5, 6, 7, 8])
    def test_regular_star_polygon(self, p):
        """Test a regular p-gon of an equal-length star ends in one terminal at its centre."""
        tree = star_tree(p)
        poly = regular_polygon(p)
        result = shrink(poly, tree)
        assert result.event_counts() == {'contraction': 0, 'split': 0, 'terminal': 1}
        terminals = [n for n in result.pattern.nodes if n.kind == NodeKind.TERMINAL]
        assert len(terminals) == 1
        assert terminals[0].point == pytest.approx((0.0, 0.0), abs=1e-6)
        assert result.pattern.count_edges(EdgeKind.TRAJECTORY) == p
        assert result.terminals == (frozenset(range(p)),)

    @pytest.mark.parametrize('p', [3, 4, 5, 6, 7, 8])
    def test_star_on_rectangle(self, p):
        """Test star trees placed on the rectangle shrink to completion."""
        tree = star_tree(p)
        assert_well_formed(shrink(build_lang_polygon(tree), tree), tree)

    def test_canonical_face(self, face_tree):
        """Test structural invariants of the canonical face's crease pattern."""
        poly = build_lang_polygon(face_tree)
        result = shrink(poly, face_tree)
        assert_well_formed(result, face_tree)
        assert result.pattern.count_edges(EdgeKind.BOUNDARY) == 37

        first = result.events[0]
        assert first.kind == EventKind.CONTRACTION
        assert first.polygon == 0
        assert len(first.leaves) == 2

    def test_synthetic_faces(self, face_topology):
        """Test every synthetic expression class shrinks to completion."""
        for class_id in range(4):
            for seed in range(3):
                frame = generate_synthetic_face(class_id, 0.8, seed=seed).frames[-1]
                tree = build_shadow_tree(frame, face_topology)
                assert_well_formed(shrink(build_lang_polygon(tree), tree), tree)

    def test_deterministic(self, face_tree):
        """Test repeated runs serialize identically."""
        poly = build_lang_polygon(face_tree)
        first = shrink(poly, face_tree, provenance={'sequence': 'canonical'})
        second = shrink(poly, face_tree, provenance={'sequence': 'canonical'})
        assert serialize(first.pattern) == serialize(second.pattern)
        assert first.event_lines() == second.event_lines()

    @pytest.mark.parametrize('seed', range(30))
    def test_random_trees(self, seed):
        """Test structural invariants on small random trees."""
        tree = random_tree(500 + seed, 4 + seed % 9)
        assert_well_formed(shrink(build_lang_polygon(tree), tree), tree)

    @pytest.mark.slow
    @pytest.mark.parametrize('seed', range(200))
    def test_random_trees_up_to_forty_leaves(self, seed):
        """Test termination and structural invariants on trees of 4 to 40 leaves."""
        tree = random_tree(seed, 4 + seed % 37)
        assert_well_formed(shrink(build_lang_polygon(tree), tree), tree)

    def test_max_events(self, face_tree):
        """Test the event budget raises once it is used up, with the partial log attached."""
        with pytest.raises(MaxEventsExceeded) as info:
            shrink(build_lang_polygon(face_tree), face_tree, ShrinkConfig(max_events=1))
        assert len(info.value.events) >= 1
        assert info.value.events[0].kind == EventKind.CONTRACTION

    def test_budget_matches_event_count(self, tree_factory):
        """Test a budget equal to a finished run's event count is enough to finish."""
        tree = tree_factory(77, 6)
        poly = build_lang_polygon(tree)
        total = len(shrink(poly, tree).events)
        assert len(shrink(poly, tree, ShrinkConfig(max_events=total)).events) == total

    def test_event_lines_are_json(self, face_tree):
        """Test the event log has one JSON object per line."""
        result = shrink(build_lang_polygon(face_tree), face_tree)
        lines = result.event_lines().splitlines()
        assert len(lines) == len(result.events)
        assert json.loads(lines[0])['kind'] in {'contraction', 'split', 'terminal'}

    def test_first_event_matches_small_steps(self, tree_factory):
        """Test the first event depth agrees with brute-force fine stepping."""
        for seed in range(50):
            tree = tree_factory(900 + seed, 4 + seed % 3)
            poly = build_lang_polygon(tree)
            result = shrink(poly, tree)
            first = result.events[0]
            if first.kind == EventKind.TERMINAL:
                continue
            step = poly.perimeter() / 20000.0
            expected = first_hit_by_stepping(poly, tree, ShrinkConfig().resolve(poly).th, step)
            assert expected - step - 1e-9 <= first.depth <= expected + 1e-9

    @pytest.mark.slow
    def test_events_independent_of_step(self, tree_factory):
        """Test every event of a default run reappears with a twentieth of the step."""
        for seed in range(50):
            tree = tree_factory(900 + seed, 4 + seed % 3)
            poly = build_lang_polygon(tree)
            coarse = shrink(poly, tree)
            fine = shrink(poly, tree, ShrinkConfig(step=coarse.config.step / 20.0))
            assert fine.event_counts() == coarse.event_counts()
            assert sorted(map(sorted, fine.terminals)) == sorted(map(sorted, coarse.terminals))
            tolerance = 10.0 * coarse.config.th
            for a, b in zip(sorted(e.depth for e in coarse.events), sorted(e.depth for e in fine.events)):
                assert a == pytest.approx(b, abs=tolerance)
