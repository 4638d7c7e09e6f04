"""
Lang polygon construction for FoldMark.

Leaves are laid out on a rectangle perimeter in leaf-cycle order with spacing
proportional to consecutive tree distances, then scaled uniformly until every
planar leaf distance is at least the corresponding tree distance.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import PolygonError
from .shadow_tree import ShadowTree, leaf_cycle

logger = logging.getLogger(__name__)

LANG_TOLERANCE = 1e-9
CONVEXITY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LangPolygon:
    """
    Convex doubling-cycle polygon.

    Attributes:
        leaves: Tree leaf indices in leaf-cycle order
        positions: Planar vertex positions, one per leaf, same order
        scale: Uniform scale applied on top of the unscaled placement
        width: Bounding rectangle width (scaled)
        height: Bounding rectangle height (scaled)
    """
    leaves: Tuple[int, ...]
    positions: Tuple[Tuple[float, float], ...]
    scale: float
    width: float
    height: float

    @property
    def points(self) -> np.ndarray:
        return np.array(self.positions, dtype=float)

    @property
    def vertex_count(self) -> int:
        return len(self.leaves)

    def scaled(self, factor: float) -> 'LangPolygon':
        """Uniformly scaled copy about the origin."""
        if factor <= 0:
            raise PolygonError(f"scale factor must be positive, got {factor}")
        positions = tuple((x * factor, y * factor) for x, y in self.positions)
        return LangPolygon(self.leaves, positions, self.scale * factor,
                           self.width * factor, self.height * factor)

    def perimeter(self) -> float:
        pts = self.points
        return float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())

    def bbox_diagonal(self) -> float:
        pts = self.points
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def to_dict(self, tree: Optional[ShadowTree] = None) -> Dict[str, Any]:
        """JSON-ready dump; landmark ids are included when the tree is given."""
        vertices = []
        for leaf, (x, y) in zip(self.leaves, self.positions):
            vertex: Dict[str, Any] = {'leaf': leaf, 'x': x, 'y': y}
            if tree is not None:
                vertex['landmark_id'] = tree.node(leaf).label
            vertices.append(vertex)
        return {
            'scale': self.scale,
            'width': self.width,
            'height': self.height,
            'vertices': vertices,
        }


def is_convex(points: np.ndarray, tol: float = CONVEXITY_TOLERANCE) -> bool:
    """
    All cross products of consecutive edge vectors share one sign.
    Collinear triples (|cross| <= tol) are tolerated.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        return True
    edges = np.roll(pts, -1, axis=0) - pts
    following = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * following[:, 1] - edges[:, 1] * following[:, 0]
    return bool(np.all(cross <= tol) or np.all(cross >= -tol))


def _perimeter_point(s: float, width: float, height: float) -> Tuple[float, float]:
    """Point at arc length s, clockwise from the top-left corner (y up)."""
    s = s % (2.0 * (width + height))
    if s < width:
        return (s, height)
    if s < width + height:
        return (width, height - (s - width))
    if s < 2.0 * width + height:
        return (width - (s - width - height), 0.0)
    return (0.0, s - 2.0 * width - height)


def _leaf_sides(tree: ShadowTree, cycle: List[int]) -> Optional[List[str]]:
    if not tree.sides:
        return None
    sides = []
    for leaf in cycle:
        region = tree.node(leaf).region
        key = region.value if region is not None else None
        if key not in tree.sides:
            raise PolygonError(f"region {key} of leaf {tree.node(leaf).label} is mapped to no side")
        sides.append(tree.sides[key])
    return sides


def _aspect_ratio(gaps: np.ndarray, sides: List[str], min_aspect: float,
                  max_aspect: float) -> float:
    totals = {'top': 0.0, 'bottom': 0.0, 'lateral': 0.0}
    p = len(sides)
    for i, gap in enumerate(gaps):
        for side in (sides[i], sides[(i + 1) % p]):
            key = side if side in ('top', 'bottom') else 'lateral'
            totals[key] += gap / 2.0
    top, lateral = totals['top'], totals['lateral'] / 2.0
    if lateral <= 0.0:
        return 1.0 if top <= 0.0 else max_aspect
    return float(np.clip(top / lateral, min_aspect, max_aspect))


def place_on_rectangle(tree: ShadowTree, min_aspect: float = 0.25,
                       max_aspect: float = 4.0) -> LangPolygon:
    """
    Place leaves on a rectangle perimeter in leaf-cycle order (unscaled).

    The perimeter equals the sum of consecutive tree distances around the cycle,
    so arc gaps equal those distances. The top-side run is centred on the top
    edge; without a side map the rectangle is a square anchored at leaf 0.

    Raises:
        PolygonError: Fewer than 3 leaves, zero perimeter, or an unmapped region
    """
    if tree.leaf_count < 3:
        raise PolygonError(f"a Lang polygon needs at least 3 leaves, got {tree.leaf_count}")

    cycle = leaf_cycle(tree)
    distances = tree.leaf_distance_matrix()
    p = len(cycle)
    gaps = np.array([distances[cycle[i], cycle[(i + 1) % p]] for i in range(p)])
    total = float(gaps.sum())
    if total <= 0.0:
        raise PolygonError("all leaves coincide; the perimeter would be empty")

    sides = _leaf_sides(tree, cycle)
    if sides is None:
        aspect = 1.0
    else:
        aspect = _aspect_ratio(gaps, sides, min_aspect, max_aspect)
    height = total / (2.0 * (1.0 + aspect))
    width = aspect * height

    arcs = np.concatenate(([0.0], np.cumsum(gaps[:-1])))
    start = 0.0
    if sides is not None and 'top' in sides:
        if all(side == 'top' for side in sides):
            first, last = 0, p - 1
        else:
            # the top run may wrap around the cycle start
            first = next(i for i in range(p) if sides[i] == 'top' and sides[i - 1] != 'top')
            last = first
            while sides[(last + 1) % p] == 'top':
                last = (last + 1) % p
        first_arc = arcs[first]
        last_arc = arcs[last] if last >= first else arcs[last] + total
        start = width / 2.0 - (first_arc + last_arc) / 2.0

    positions = tuple(_perimeter_point(start + arc, width, height) for arc in arcs)
    return LangPolygon(tuple(cycle), positions, 1.0, width, height)


def _pair_ratios(poly: LangPolygon, tree: ShadowTree) -> Tuple[np.ndarray, np.ndarray]:
    pts = poly.points
    planar = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    distances = tree.leaf_distance_matrix()
    order = np.array(poly.leaves)
    return planar, distances[np.ix_(order, order)]


def minimal_scale(poly: LangPolygon, tree: ShadowTree) -> float:
    """
    Smallest uniform scale s* satisfying d_P >= d_T for every leaf pair.

    Raises:
        PolygonError: Two leaves share a placement
    """
    _check_leaves(poly, tree)
    planar, tree_d = _pair_ratios(poly, tree)
    upper = np.triu_indices(poly.vertex_count, k=1)
    if np.any(planar[upper] <= 0.0):
        raise PolygonError("coincident leaf placements; the scale is undefined")
    return float(np.max(tree_d[upper] / planar[upper]))


def verify_lang_condition(poly: LangPolygon, tree: ShadowTree,
                          tol: float = LANG_TOLERANCE) -> List[Tuple[int, int]]:
    """
    All leaf pairs (as tree leaf indices) with d_P < d_T - tol.

    Raises:
        PolygonError: Polygon leaves do not match the tree's leaf set
    """
    _check_leaves(poly, tree)
    planar, tree_d = _pair_ratios(poly, tree)
    violations = []
    for i in range(poly.vertex_count):
        for j in range(i + 1, poly.vertex_count):
            if planar[i, j] < tree_d[i, j] - tol:
                a, b = poly.leaves[i], poly.leaves[j]
                violations.append((min(a, b), max(a, b)))
    return sorted(violations)


def _check_leaves(poly: LangPolygon, tree: ShadowTree):
    if sorted(poly.leaves) != list(range(tree.leaf_count)):
        raise PolygonError("polygon vertices do not correspond to the tree's leaves")


def build_lang_polygon(tree: ShadowTree, margin: float = 0.05, min_aspect: float = 0.25,
                       max_aspect: float = 4.0) -> LangPolygon:
    """
    Build the scaled Lang polygon for a shadow tree.

    Args:
        tree: Shadow tree with at least 3 leaves
        margin: Extra relative scale beyond the minimal one (>= 0)
        min_aspect: Lower aspect-ratio clamp
        max_aspect: Upper aspect-ratio clamp

    Returns:
        Convex polygon satisfying d_P >= d_T for every leaf pair
    """
    if margin < 0:
        raise PolygonError(f"margin must be non-negative, got {margin}")
    placed = place_on_rectangle(tree, min_aspect, max_aspect)
    s_star = minimal_scale(placed, tree)
    poly = placed.scaled(s_star * (1.0 + margin))
    if not is_convex(poly.points):
        raise PolygonError("constructed Lang polygon is not convex")
    logger.debug("lang polygon: %d vertices, s*=%.6g, %.6g x %.6g",
                 poly.vertex_count, s_star, poly.width, poly.height)
    return poly
