"""
Polygon shrinking engine for FoldMark.

Every edge of the Lang polygon moves inward at unit speed. Between events the
vertices travel along straight lines, so each step is scanned exactly:
signed edge lengths are linear in the inset depth, split margins are convex,
and the collapse margin is quadratic. Events found inside a step are located
by bisection, replayed, and applied one at a time in a global order shared by
all active polygons.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .crease import CreasePattern, CreasePatternBuilder, EdgeKind, NodeKind
from .errors import (ConfigError, MaxEventsExceeded, NumericalDegeneracyError,
                     OffsetInversionError, PolygonError, ShrinkError, StaleEventError)
from .lang_polygon import LangPolygon, is_convex
from .shadow_tree import ShadowTree

logger = logging.getLogger(__name__)

TREE_METRICS = ('reduced', 'fixed')
CONVEXITY_TOLERANCE = 1e-7
_SPIKE_TOLERANCE = 1e-12
_COLLINEAR_TOLERANCE = 1e-12
_GROUP_SLACK = 1e-6


class EventKind(str, Enum):
    CONTRACTION = 'contraction'
    SPLIT = 'split'
    TERMINAL = 'terminal'


@dataclass(frozen=True)
class PolygonVertex:
    """
    Vertex of an active polygon.

    Attributes:
        uid: Engine-wide identity, stable until the vertex merges or splits
        position: Current planar position
        leaves: Tree leaf indices merged into this vertex
        node: Crease node id of the vertex's last recorded event point
    """
    uid: int
    position: Tuple[float, float]
    leaves: FrozenSet[int]
    node: int


@dataclass(frozen=True)
class ActivePolygon:
    """
    Convex polygon being shrunk.

    Edge i runs from vertex i to vertex i+1 and keeps its unit tangent for its
    whole life, so vertex velocities only change at events touching the vertex.
    """
    id: int
    vertices: Tuple[PolygonVertex, ...]
    tangents: Tuple[Tuple[float, float], ...]
    orientation: float
    depth: float = 0.0
    parent: Optional[int] = None
    excluded: FrozenSet[Tuple[int, int]] = frozenset()

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], leaves: Optional[Sequence[int]] = None,
                    nodes: Optional[Sequence[int]] = None, polygon_id: int = 0,
                    depth: float = 0.0) -> 'ActivePolygon':
        """
        Build a polygon from vertex positions.

        Raises:
            PolygonError: Fewer than 3 vertices, repeated consecutive points or zero area
        """
        pts = np.asarray(points, dtype=float)
        n = len(pts)
        if n < 3:
            raise PolygonError(f"an active polygon needs at least 3 vertices, got {n}")
        leaves = list(range(n)) if leaves is None else list(leaves)
        nodes = list(range(n)) if nodes is None else list(nodes)
        edges = np.roll(pts, -1, axis=0) - pts
        lengths = np.linalg.norm(edges, axis=1)
        if np.any(lengths <= 0.0):
            raise PolygonError("polygon has coincident consecutive vertices")
        area = _signed_area(pts)
        if area == 0.0:
            raise PolygonError("polygon has zero area")
        vertices = tuple(PolygonVertex(i, (float(p[0]), float(p[1])), frozenset({leaves[i]}), nodes[i])
                         for i, p in enumerate(pts))
        tangents = tuple((float(e[0] / l), float(e[1] / l)) for e, l in zip(edges, lengths))
        return cls(polygon_id, vertices, tangents, 1.0 if area > 0 else -1.0, depth)

    @property
    def size(self) -> int:
        return len(self.vertices)

    @property
    def is_terminal(self) -> bool:
        return len(self.vertices) <= 2

    @property
    def points(self) -> np.ndarray:
        return np.array([v.position for v in self.vertices], dtype=float)

    @property
    def leaf_set(self) -> FrozenSet[int]:
        return frozenset().union(*(v.leaves for v in self.vertices))

    def normals(self) -> np.ndarray:
        """Inward unit normal of each edge."""
        t = np.array(self.tangents, dtype=float)
        return self.orientation * np.column_stack((-t[:, 1], t[:, 0]))

    def velocities(self) -> np.ndarray:
        """
        Vertex velocities at unit edge speed.

        Raises:
            NumericalDegeneracyError: A vertex sits between anti-parallel edges
        """
        normals = self.normals()
        incoming = np.roll(normals, 1, axis=0)
        denom = 1.0 + np.einsum('ij,ij->i', incoming, normals)
        if np.any(denom < _SPIKE_TOLERANCE):
            raise NumericalDegeneracyError(
                f"vertex between anti-parallel edges in polygon {self.id}", self.depth)
        return (incoming + normals) / denom[:, None]

    def signed_lengths(self) -> np.ndarray:
        pts = self.points
        t = np.array(self.tangents, dtype=float)
        return np.einsum('ij,ij->i', np.roll(pts, -1, axis=0) - pts, t)

    def area(self) -> float:
        """Area with the polygon's orientation (positive while not inverted)."""
        return self.orientation * _signed_area(self.points)

    def perimeter(self) -> float:
        return float(np.sum(self.signed_lengths()))


def _signed_area(pts: np.ndarray) -> float:
    nxt = np.roll(pts, -1, axis=0)
    return 0.5 * float(np.sum(pts[:, 0] * nxt[:, 1] - pts[:, 1] * nxt[:, 0]))


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class ShrinkEvent:
    """
    One engine event.

    vertices are indices into the polygon at the time of the event; leaves are
    the merged leaf set (contraction, terminal) or the representative leaf pair
    (split); intermediates are the tree nodes placed on a split chord.
    """
    kind: EventKind
    depth: float
    polygon: int
    vertices: Tuple[int, ...]
    leaves: Tuple[int, ...] = ()
    intermediates: Tuple[int, ...] = ()
    uids: Tuple[int, ...] = field(default=(), compare=False, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            'kind': self.kind.value,
            'depth': self.depth,
            'polygon': self.polygon,
            'vertices': list(self.vertices),
            'leaves': list(self.leaves),
            'intermediates': list(self.intermediates),
        }

    def to_json(self) -> str:
        """One JSON line."""
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class ShrinkConfig:
    """
    Engine tolerances. None fields are derived from the polygon by resolve().

    Attributes:
        th: Collision tolerance (default 1e-6 x bounding-box diagonal)
        step: Base inset step (default perimeter / 2000)
        refine_tol: Event-depth bisection tolerance
        max_events: Safety bound (default 8 x leaf count)
        tree_metric: 'reduced' shrinks tree distances by 2t while insetting,
            'fixed' keeps them constant
    """
    th: Optional[float] = None
    step: Optional[float] = None
    refine_tol: float = 1e-9
    max_events: Optional[int] = None
    tree_metric: str = 'reduced'

    @classmethod
    def from_dict(cls, section: Dict[str, object]) -> 'ShrinkConfig':
        return cls(th=section.get('th'), step=section.get('step'),
                   refine_tol=float(section.get('refine_tol', 1e-9)),
                   max_events=section.get('max_events'),
                   tree_metric=str(section.get('tree_metric', 'reduced')))

    def resolve(self, poly: LangPolygon) -> 'ShrinkConfig':
        """
        Fill derived defaults and validate.

        Raises:
            ConfigError: Non-positive values, unknown tree metric or refine_tol >= th
        """
        if self.tree_metric not in TREE_METRICS:
            raise ConfigError(f"tree_metric must be one of {TREE_METRICS}, got {self.tree_metric!r}")
        th = float(self.th) if self.th is not None else 1e-6 * poly.bbox_diagonal()
        step = float(self.step) if self.step is not None else poly.perimeter() / 2000.0
        max_events = int(self.max_events) if self.max_events is not None else 8 * poly.vertex_count
        refine_tol = float(self.refine_tol)
        if th <= 0 or step <= 0 or refine_tol <= 0 or max_events <= 0:
            raise ConfigError("shrink tolerances, step and max_events must be positive",
                              th=th, step=step, refine_tol=refine_tol, max_events=max_events)
        if refine_tol >= th:
            if self.th is None:
                refine_tol = th / 100.0
                logger.debug("refine_tol lowered to %.3g for a small polygon", refine_tol)
            else:
                raise ConfigError(f"refine_tol ({refine_tol}) must be smaller than th ({th})")
        return ShrinkConfig(th, step, refine_tol, max_events, self.tree_metric)


@dataclass(frozen=True)
class ShrinkResult:
    """Engine output; unpacks as (pattern, events)."""
    pattern: CreasePattern
    events: Tuple[ShrinkEvent, ...]
    polygon: LangPolygon
    config: ShrinkConfig
    terminals: Tuple[FrozenSet[int], ...] = ()

    def __iter__(self) -> Iterator[object]:
        return iter((self.pattern, self.events))

    def event_counts(self) -> Dict[str, int]:
        counts = {kind.value: 0 for kind in EventKind}
        for event in self.events:
            counts[event.kind.value] += 1
        return counts

    def event_lines(self) -> str:
        return ''.join(event.to_json() + '\n' for event in self.events)


def offset_step(active: ActivePolygon, delta: float) -> ActivePolygon:
    """
    Translate every edge inward by delta.

    Each vertex moves to the intersection of its two offset edge lines.

    Raises:
        OffsetInversionError: An edge would pass through zero length
    """
    if delta < 0:
        raise ShrinkError(f"offset must be non-negative, got {delta}")
    if delta == 0:
        return active
    velocities = active.velocities()
    moved = active.points + delta * velocities
    t = np.array(active.tangents, dtype=float)
    lengths = np.einsum('ij,ij->i', np.roll(moved, -1, axis=0) - moved, t)
    scale = max(1.0, float(np.max(np.abs(active.signed_lengths()))))
    if np.any(lengths < -1e-9 * scale):
        raise OffsetInversionError(
            f"offset of {delta:.6g} inverts polygon {active.id}; refine the step",
            depth=active.depth + delta)
    vertices = tuple(replace(v, position=(float(p[0]), float(p[1])))
                     for v, p in zip(active.vertices, moved))
    return replace(active, vertices=vertices, depth=active.depth + delta)


def _kappa(tree_metric: str) -> float:
    return 2.0 if tree_metric == 'reduced' else 0.0


def _representative(tree_distances: np.ndarray, a: FrozenSet[int],
                    b: FrozenSet[int]) -> Tuple[int, int, float]:
    """Leaf pair minimizing d_T between two merged-leaf sets."""
    best = None
    for i in sorted(a):
        for k in sorted(b):
            d = float(tree_distances[i, k])
            if best is None or d < best[2]:
                best = (i, k, d)
    return best


def _split_pairs(active: ActivePolygon) -> List[Tuple[int, int]]:
    n = active.size
    pairs = []
    for i in range(n):
        for k in range(i + 2, n):
            if i == 0 and k == n - 1:
                continue
            uids = tuple(sorted((active.vertices[i].uid, active.vertices[k].uid)))
            if uids in active.excluded:
                continue
            pairs.append((i, k))
    return pairs


def detect_contraction(active: ActivePolygon, th: float) -> List[ShrinkEvent]:
    """Consecutive vertex pairs closer than th."""
    pts = active.points
    gaps = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    events = []
    for i in np.nonzero(gaps <= th)[0]:
        j = (int(i) + 1) % active.size
        a, b = active.vertices[int(i)], active.vertices[j]
        events.append(ShrinkEvent(EventKind.CONTRACTION, active.depth, active.id, (int(i), j),
                                  tuple(sorted(a.leaves | b.leaves)), (), (a.uid, b.uid)))
    return events


def detect_split(active: ActivePolygon, tree: ShadowTree, th: float,
                 tree_metric: str = 'reduced') -> List[ShrinkEvent]:
    """
    Non-adjacent vertex pairs whose planar distance reached their tree distance.

    Tree distance is taken between the closest leaves of the two merged sets,
    reduced by 2 x depth in 'reduced' mode.
    """
    distances = tree.leaf_distance_matrix()
    kappa = _kappa(tree_metric)
    pts = active.points
    events = []
    for i, k in _split_pairs(active):
        a, b = active.vertices[i], active.vertices[k]
        leaf_a, leaf_b, d_tree = _representative(distances, a.leaves, b.leaves)
        if np.linalg.norm(pts[i] - pts[k]) <= d_tree - kappa * active.depth + th:
            events.append(ShrinkEvent(EventKind.SPLIT, active.depth, active.id, (i, k),
                                      (leaf_a, leaf_b), (), (a.uid, b.uid)))
    return events


def exclude_boundary_pairs(active: ActivePolygon, tree: ShadowTree, th: float,
                           tree_metric: str = 'reduced') -> ActivePolygon:
    """
    Mark split pairs that already hold at creation and lie on one straight
    stretch of the boundary; such pairs never produce a split.
    """
    tangents = np.array(active.tangents, dtype=float)
    n = active.size
    excluded = set(active.excluded)
    for event in detect_split(active, tree, th, tree_metric):
        i, k = event.vertices
        forward = tangents[i:k]
        backward = np.concatenate((tangents[k:], tangents[:i]))
        for run in (forward, backward):
            if len(run) and np.all(run @ run[0] >= 1.0 - _COLLINEAR_TOLERANCE):
                excluded.add(tuple(sorted(event.uids)))
                break
    if len(excluded) == len(active.excluded):
        return active
    logger.debug("polygon %d: %d collinear pairs excluded from splitting", active.id,
                 len(excluded) - len(active.excluded))
    return replace(active, excluded=frozenset(excluded))


def _event_point(recorder: CreasePatternBuilder, vertex: PolygonVertex, point: np.ndarray,
                 kind: NodeKind, th: float) -> int:
    """Crease node for a vertex stopping at point; a node within th of it is reused."""
    if 0 <= vertex.node < recorder.node_count:
        last = recorder.node(vertex.node)
        if np.hypot(last.x - point[0], last.y - point[1]) <= th:
            return vertex.node
    node = recorder.add_node(point, kind)
    recorder.add_edge(vertex.node, node, EdgeKind.TRAJECTORY)
    return node


def apply_contraction(active: ActivePolygon, event: ShrinkEvent, th: Optional[float] = None,
                      recorder: Optional[CreasePatternBuilder] = None,
                      uid: Optional[int] = None) -> ActivePolygon:
    """
    Merge two consecutive vertices at their midpoint.

    The merged vertex keeps the union of both leaf sets and the neighbouring
    edges; a merge crease node is recorded and both trajectories end there.

    Raises:
        StaleEventError: Event vertices are not consecutive, no longer match,
            or have separated beyond twice th
    """
    n = active.size
    i, j = event.vertices
    if j != (i + 1) % n:
        raise StaleEventError(f"contraction vertices {event.vertices} are not consecutive")
    a, b = active.vertices[i], active.vertices[j]
    if event.uids and event.uids != (a.uid, b.uid):
        raise StaleEventError(f"contraction event refers to replaced vertices in polygon {active.id}")
    pa, pb = np.array(a.position), np.array(b.position)
    if th is not None and np.linalg.norm(pa - pb) > 2.0 * th:
        raise StaleEventError(f"vertices {i} and {j} have separated in polygon {active.id}")

    midpoint = (pa + pb) / 2.0
    node = a.node
    if recorder is not None:
        tolerance = th if th is not None else 0.0
        node = _event_point(recorder, a, midpoint, NodeKind.MERGE, tolerance)
        if node == a.node and recorder.node(node).kind != NodeKind.MERGE:
            node = recorder.add_node(midpoint, NodeKind.MERGE)
            recorder.add_edge(a.node, node, EdgeKind.TRAJECTORY)
        if b.node != node:
            recorder.add_edge(b.node, node, EdgeKind.TRAJECTORY)

    if uid is None:
        uid = max(v.uid for v in active.vertices) + 1
    merged = PolygonVertex(uid,
                           (float(midpoint[0]), float(midpoint[1])), a.leaves | b.leaves, node)
    # edge i (between a and b) disappears; tangent k must stay the edge leaving vertex k
    vertices = list(active.vertices)
    tangents = list(active.tangents)
    if j == 0:
        vertices[0] = merged
        del vertices[i]
    else:
        vertices[i] = merged
        del vertices[j]
    del tangents[i]
    return replace(active, vertices=tuple(vertices), tangents=tuple(tangents))


def chord_fractions(tree: ShadowTree, path: Sequence[int]) -> List[float]:
    """Cumulative path-distance fraction of every interior path node."""
    steps = [tree.graph[u][v]['weight'] for u, v in zip(path, path[1:])]
    total = float(sum(steps))
    if total <= 0.0:
        return [0.5] * (len(path) - 2)
    return [float(x) / total for x in np.cumsum(steps)[:-1]]


def apply_split(active: ActivePolygon, event: ShrinkEvent, tree: ShadowTree,
                th: Optional[float] = None, recorder: Optional[CreasePatternBuilder] = None,
                ids: Optional[Tuple[int, int]] = None,
                tree_metric: str = 'reduced') -> Tuple[ActivePolygon, ActivePolygon]:
    """
    Split a polygon along the chord between two non-adjacent vertices.

    The intermediate tree nodes on the path between the representative leaves
    are placed along the chord at their cumulative path-distance fractions.
    Both sub-polygons keep both endpoints and continue at the same depth.

    Returns:
        (first, second): vertices i..k and k..i in cyclic order

    Raises:
        ShrinkError: Endpoints adjacent
        StaleEventError: Vertices no longer match or the split condition fails
    """
    n = active.size
    i, k = sorted(event.vertices)
    if k - i < 2 or (i == 0 and k == n - 1):
        raise ShrinkError(f"split endpoints {event.vertices} are adjacent")
    a, b = active.vertices[i], active.vertices[k]
    if event.uids and set(event.uids) != {a.uid, b.uid}:
        raise StaleEventError(f"split event refers to replaced vertices in polygon {active.id}")
    pa, pb = np.array(a.position), np.array(b.position)
    distances = tree.leaf_distance_matrix()
    leaf_a, leaf_b, d_tree = _representative(distances, a.leaves, b.leaves)
    chord = np.linalg.norm(pb - pa)
    if th is not None and chord > d_tree - _kappa(tree_metric) * active.depth + 2.0 * th:
        raise StaleEventError(f"split condition no longer holds for {event.vertices}")
    if chord <= 0.0:
        raise NumericalDegeneracyError("split endpoints coincide", active.depth)

    path = tree.path(leaf_a, leaf_b)
    node_a, node_b = a.node, b.node
    if recorder is not None:
        tolerance = th if th is not None else 0.0
        node_a = _event_point(recorder, a, pa, NodeKind.SPLIT_ENDPOINT, tolerance)
        node_b = _event_point(recorder, b, pb, NodeKind.SPLIT_ENDPOINT, tolerance)
        previous = node_a
        for fraction in chord_fractions(tree, path):
            node = recorder.add_node(pa + fraction * (pb - pa), NodeKind.SPLIT_INTERMEDIATE)
            recorder.add_edge(previous, node, EdgeKind.SPLIT_CHORD)
            previous = node
        recorder.add_edge(previous, node_b, EdgeKind.SPLIT_CHORD)

    a = replace(a, node=node_a)
    b = replace(b, node=node_b)
    vertices = list(active.vertices)
    vertices[i], vertices[k] = a, b
    tangents = list(active.tangents)
    direction = (pb - pa) / chord
    back = (float(-direction[0]), float(-direction[1]))
    ahead = (float(direction[0]), float(direction[1]))

    first_id, second_id = ids if ids is not None else (active.id * 2 + 1, active.id * 2 + 2)
    first = replace(active, id=first_id, parent=active.id,
                    vertices=tuple(vertices[i:k + 1]),
                    tangents=tuple(tangents[i:k]) + (back,))
    second = replace(active, id=second_id, parent=active.id,
                     vertices=tuple(vertices[k:] + vertices[:i + 1]),
                     tangents=tuple(tangents[k:] + tangents[:i]) + (ahead,))
    return first, second


def _collapse(active: ActivePolygon, th: float, recorder: CreasePatternBuilder) -> List[int]:
    """
    Finish a polygon whose remaining vertices lie on a point or a segment.

    Vertices are grouped along the principal axis; each group ends at one
    terminal node and consecutive groups are joined along the ridge.
    """
    pts = active.points
    centre = pts.mean(axis=0)
    centred = pts - centre
    if np.max(np.linalg.norm(centred, axis=1)) <= 4.0 * th:
        node = recorder.add_node(centre, NodeKind.TERMINAL)
        for vertex in active.vertices:
            recorder.add_edge(vertex.node, node, EdgeKind.TRAJECTORY)
        return [node]
    if np.allclose(centred, 0.0):
        axis = np.array([1.0, 0.0])
    else:
        try:
            axis = np.linalg.svd(centred, full_matrices=False)[2][0]
        except np.linalg.LinAlgError as e:
            raise NumericalDegeneracyError(f"collapse axis of polygon {active.id}: {e}", active.depth)
        if abs(axis[0]) < abs(axis[1]):
            axis = axis if axis[1] > 0 else -axis
        else:
            axis = axis if axis[0] > 0 else -axis
    projection = centred @ axis
    order = np.argsort(projection, kind='stable')

    groups: List[List[int]] = [[int(order[0])]]
    for previous, current in zip(order, order[1:]):
        if projection[current] - projection[previous] > 2.0 * th:
            groups.append([])
        groups[-1].append(int(current))

    terminals = []
    for group in groups:
        node = recorder.add_node(pts[group].mean(axis=0), NodeKind.TERMINAL)
        for index in group:
            recorder.add_edge(active.vertices[index].node, node, EdgeKind.TRAJECTORY)
        if terminals:
            recorder.add_edge(terminals[-1], node, EdgeKind.TRAJECTORY)
        terminals.append(node)
    return terminals


class MoleculeEngine:
    """
    Runs the shrinking process for one Lang polygon.

    Single-threaded: event ordering is global across all active polygons.
    Distinct engines share nothing and may run in parallel.
    """

    def __init__(self, tree: ShadowTree, config: ShrinkConfig):
        self.tree = tree
        self.config = config
        self.kappa = _kappa(config.tree_metric)
        self._distances = tree.leaf_distance_matrix()
        self._uids = itertools.count()
        self._polygon_ids = itertools.count()
        self._pairs: Dict[Tuple[int, int], float] = {}

    def _pair_distance(self, a: PolygonVertex, b: PolygonVertex) -> float:
        key = (a.uid, b.uid) if a.uid < b.uid else (b.uid, a.uid)
        if key not in self._pairs:
            self._pairs[key] = _representative(self._distances, a.leaves, b.leaves)[2]
        return self._pairs[key]

    def _bisect(self, predicate, count: int, horizon: float) -> np.ndarray:
        """Smallest depth in [0, horizon] where each monotone predicate turns true."""
        lo = np.zeros(count)
        hi = np.full(count, horizon)
        hi[predicate(lo)] = 0.0
        while np.max(hi - lo) > self.config.refine_tol:
            mid = (lo + hi) / 2.0
            hit = predicate(mid)
            hi = np.where(hit, mid, hi)
            lo = np.where(hit, lo, mid)
        return hi

    def _earliest(self, poly: ActivePolygon, horizon: float) -> Optional[Tuple[float, int, Tuple[int, ...]]]:
        """
        Earliest event of one polygon within horizon.

        Returns (relative depth, rank, vertex indices); rank orders contraction,
        split, collapse.
        """
        th = self.config.th
        pts = poly.points
        vel = poly.velocities()
        t = np.array(poly.tangents, dtype=float)
        s0 = np.einsum('ij,ij->i', np.roll(pts, -1, axis=0) - pts, t)
        slope = np.einsum('ij,ij->i', np.roll(vel, -1, axis=0) - vel, t)
        found: List[Tuple[float, int, Tuple[int, ...]]] = []

        def contraction_hit(tau, rows):
            return np.minimum(s0[rows], s0[rows] + slope[rows] * tau) <= th

        rows = np.nonzero(contraction_hit(horizon, slice(None)))[0]
        if len(rows):
            depths = self._bisect(lambda tau: contraction_hit(tau, rows), len(rows), horizon)
            for row, depth in zip(rows, depths):
                found.append((float(depth), 0, (int(row), (int(row) + 1) % poly.size)))

        pairs = _split_pairs(poly)
        if pairs:
            idx = np.array(pairs)
            a = pts[idx[:, 0]] - pts[idx[:, 1]]
            b = vel[idx[:, 0]] - vel[idx[:, 1]]
            d_tree = np.array([self._pair_distance(poly.vertices[i], poly.vertices[k]) for i, k in pairs])
            c0 = d_tree - self.kappa * poly.depth + th
            tau_star = self._split_minimiser(a, b)

            def split_hit(tau, sel):
                at = np.clip(tau_star[sel], 0.0, tau)[:, None]
                gap = np.linalg.norm(a[sel] + at * b[sel], axis=1) + self.kappa * at[:, 0] - c0[sel]
                return gap <= 0.0

            rows = np.nonzero(split_hit(horizon, slice(None)))[0]
            if len(rows):
                depths = self._bisect(lambda tau: split_hit(tau, rows), len(rows), horizon)
                for row, depth in zip(rows, depths):
                    found.append((float(depth), 1, tuple(int(v) for v in idx[row])))

        # collapse margin: area - th/2 * perimeter (width below th), quadratic in depth
        nxt_p, nxt_v = np.roll(pts, -1, axis=0), np.roll(vel, -1, axis=0)
        q0 = poly.orientation * 0.5 * np.sum(_cross(pts, nxt_p)) - 0.5 * th * np.sum(s0)
        q1 = poly.orientation * 0.5 * np.sum(_cross(pts, nxt_v) + _cross(vel, nxt_p)) - 0.5 * th * np.sum(slope)
        q2 = poly.orientation * 0.5 * np.sum(_cross(vel, nxt_v))

        def collapse_margin(tau):
            tau = np.asarray(tau, dtype=float)
            lowest = np.minimum(q0, q0 + q1 * tau + q2 * tau * tau)
            if q2 > 0:
                vertex = np.clip(-q1 / (2.0 * q2), 0.0, tau)
                lowest = np.minimum(lowest, q0 + q1 * vertex + q2 * vertex * vertex)
            return lowest

        if collapse_margin(horizon) <= 0.0:
            depth = self._bisect(lambda tau: collapse_margin(tau) <= 0.0, 1, horizon)[0]
            found.append((float(depth), 2, tuple(range(poly.size))))

        if not found:
            return None
        first = min(d for d, _, _ in found)
        tied = [f for f in found if f[0] <= first + self.config.refine_tol]
        return min(tied, key=lambda f: (f[1], f[2]))

    def _split_minimiser(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Unconstrained minimiser of |a + tau b| + kappa tau (may be negative)."""
        beta = np.linalg.norm(b, axis=1)
        tau = np.zeros(len(a))
        moving = beta > 0
        if self.kappa == 0.0:
            tau[moving] = -np.einsum('ij,ij->i', a[moving], b[moving]) / beta[moving] ** 2
            return tau
        fast = beta > self.kappa
        unit = b[fast] / beta[fast][:, None]
        along = np.einsum('ij,ij->i', a[fast], unit)
        across = np.abs(_cross(unit, a[fast]))
        u = -self.kappa * across / np.sqrt(beta[fast] ** 2 - self.kappa ** 2)
        tau[fast] = (u - along) / beta[fast]
        return tau

    def _new_polygon(self, poly: ActivePolygon) -> ActivePolygon:
        poly = exclude_boundary_pairs(poly, self.tree, self.config.th, self.config.tree_metric)
        self._check_convex(poly)
        return poly

    def _check_convex(self, poly: ActivePolygon):
        if poly.size < 3:
            return
        scale = max(float(np.max(np.abs(poly.signed_lengths()))), 1.0)
        if not is_convex(poly.points, CONVEXITY_TOLERANCE * scale * scale):
            raise NumericalDegeneracyError(f"polygon {poly.id} lost convexity", poly.depth)

    def _is_flat(self, poly: ActivePolygon) -> bool:
        if poly.size < 3:
            return True
        if poly.area() <= 0.5 * self.config.th * poly.perimeter():
            return True
        normals = poly.normals()
        denom = 1.0 + np.einsum('ij,ij->i', np.roll(normals, 1, axis=0), normals)
        if np.any(denom < _SPIKE_TOLERANCE):
            return True
        # a corner turning past half a revolution only survives a merge inside a collapsing sliver
        t = np.array(poly.tangents, dtype=float)
        incoming = np.roll(t, 1, axis=0)
        turns = poly.orientation * _cross(incoming, t)
        backward = np.einsum('ij,ij->i', incoming, t)
        return bool(np.any((turns < 0.0) & (backward < 0.0)))

    def _terminate(self, poly: ActivePolygon, recorder: CreasePatternBuilder,
                   events: List[ShrinkEvent], terminals: List[FrozenSet[int]]):
        _collapse(poly, self.config.th, recorder)
        leaves = poly.leaf_set
        events.append(ShrinkEvent(EventKind.TERMINAL, poly.depth, poly.id,
                                  tuple(range(poly.size)), tuple(sorted(leaves)), (),
                                  tuple(v.uid for v in poly.vertices)))
        terminals.append(leaves)
        logger.debug("terminal: polygon %d with %d vertices at depth %.9g",
                     poly.id, poly.size, poly.depth)

    def _contraction_group(self, poly: ActivePolygon, edge: int) -> List[int]:
        """
        Edges that reach th together with edge, measured along their own
        tangents; equal-length edges within a th-relative slack join the group.
        Inverted or separated edges never qualify.
        """
        th = self.config.th
        pts = poly.points
        vel = poly.velocities()
        t = np.array(poly.tangents, dtype=float)
        gaps = np.roll(pts, -1, axis=0) - pts
        s = np.einsum('ij,ij->i', gaps, t)
        slope = np.einsum('ij,ij->i', np.roll(vel, -1, axis=0) - vel, t)
        limit = th * (1.0 + _GROUP_SLACK) - np.minimum(slope, 0.0) * self.config.refine_tol
        close = (s <= limit) & (s >= -th) & (np.linalg.norm(gaps, axis=1) <= 2.0 * th)
        close[edge] = True
        return [int(i) for i in np.nonzero(close)[0]]

    def _contract(self, poly: ActivePolygon, edge: int, recorder: CreasePatternBuilder,
                  events: List[ShrinkEvent], terminals: List[FrozenSet[int]]) -> Optional[ActivePolygon]:
        th = self.config.th
        group = self._contraction_group(poly, edge)
        if len(group) >= poly.size - 1:
            self._terminate(poly, recorder, events, terminals)
            return None

        # the detected edge merges first, the rest in index order
        order = [edge] + [i for i in group if i != edge]
        pending = [(poly.vertices[i].uid, poly.vertices[(i + 1) % poly.size].uid) for i in order]
        forced = True
        while pending:
            first_uid, _ = pending.pop(0)
            index = next(n for n, v in enumerate(poly.vertices) if v.uid == first_uid)
            current, partner = poly.vertices[index], poly.vertices[(index + 1) % poly.size]
            gap = float(np.hypot(partner.position[0] - current.position[0],
                                 partner.position[1] - current.position[1]))
            if gap > 2.0 * th and not forced:
                # drifted apart after an earlier merge; detected again on its own
                continue
            forced = False
            event = ShrinkEvent(EventKind.CONTRACTION, poly.depth, poly.id,
                                (index, (index + 1) % poly.size),
                                tuple(sorted(current.leaves | partner.leaves)), (),
                                (current.uid, partner.uid))
            merged_uid = next(self._uids)
            poly = apply_contraction(poly, event, th, recorder, merged_uid)
            events.append(event)
            logger.debug("contraction: polygon %d vertices %s at depth %.9g -> %d vertices",
                         poly.id, event.vertices, poly.depth, poly.size)
            gone = {current.uid, partner.uid}
            pending = [(merged_uid if u in gone else u, merged_uid if v in gone else v)
                       for u, v in pending]
            pending = [(u, v) for u, v in pending if u != v]
            if poly.size <= 2:
                break

        if self._is_flat(poly):
            self._terminate(poly, recorder, events, terminals)
            return None
        return self._new_polygon(replace(poly, excluded=frozenset(
            p for p in poly.excluded if all(u in {v.uid for v in poly.vertices} for u in p))))

    def run(self, poly: LangPolygon, provenance: Optional[Dict[str, str]] = None) -> ShrinkResult:
        """
        Shrink a Lang polygon until every sub-polygon has terminated.

        Raises:
            MaxEventsExceeded: max_events events logged with polygons still active (partial log attached)
            NumericalDegeneracyError: Convexity lost, or no convergence before
                the depth reaches the polygon's diagonal
        """
        cfg = self.config
        recorder = CreasePatternBuilder()
        node_ids = [recorder.add_node(p, NodeKind.BOUNDARY_LEAF) for p in poly.positions]
        for i in range(len(node_ids)):
            recorder.add_edge(node_ids[i], node_ids[(i + 1) % len(node_ids)], EdgeKind.BOUNDARY)

        root = ActivePolygon.from_points(poly.points, poly.leaves, node_ids,
                                         polygon_id=next(self._polygon_ids))
        for _ in range(root.size):
            next(self._uids)
        active = [self._new_polygon(root)]
        events: List[ShrinkEvent] = []
        terminals: List[FrozenSet[int]] = []
        depth = 0.0
        limit = poly.bbox_diagonal()

        while active:
            if len(events) >= cfg.max_events:
                raise MaxEventsExceeded(
                    f"shrinking reached {cfg.max_events} events with {len(active)} polygons "
                    f"still active at depth {depth:.6g}", events)
            candidates = []
            for position, current in enumerate(active):
                hit = self._earliest(current, cfg.step)
                if hit is not None:
                    candidates.append((hit[0], hit[1], current.id, hit[2], position))

            if not candidates:
                active = [offset_step(p, cfg.step) for p in active]
                depth += cfg.step
                if depth > limit:
                    raise NumericalDegeneracyError("polygon did not converge", depth)
                continue

            first = min(c[0] for c in candidates)
            tau, rank, _, vertices, position = min(
                (c for c in candidates if c[0] <= first + cfg.refine_tol),
                key=lambda c: (c[1], c[2], c[3]))
            active = [offset_step(p, tau) for p in active]
            depth += tau
            target = active.pop(position)

            if rank == 0:
                result = self._contract(target, vertices[0], recorder, events, terminals)
                replacement = [result] if result is not None else []
            elif rank == 1:
                a, b = target.vertices[vertices[0]], target.vertices[vertices[1]]
                leaf_a, leaf_b, _ = _representative(self._distances, a.leaves, b.leaves)
                path = self.tree.path(leaf_a, leaf_b)
                event = ShrinkEvent(EventKind.SPLIT, target.depth, target.id, vertices,
                                    (leaf_a, leaf_b), tuple(path[1:-1]), (a.uid, b.uid))
                ids = (next(self._polygon_ids), next(self._polygon_ids))
                halves = apply_split(target, event, self.tree, cfg.th, recorder, ids, cfg.tree_metric)
                events.append(event)
                logger.debug("split: polygon %d vertices %s at depth %.9g -> %d + %d vertices",
                             target.id, vertices, target.depth, halves[0].size, halves[1].size)
                replacement = []
                for half in halves:
                    if self._is_flat(half):
                        self._terminate(half, recorder, events, terminals)
                    else:
                        replacement.append(self._new_polygon(half))
            else:
                self._terminate(target, recorder, events, terminals)
                replacement = []
            active[position:position] = replacement

        pattern = recorder.build(provenance)
        logger.debug("shrink finished: %d events, %d crease nodes, %d crease edges",
                     len(events), len(pattern.nodes), len(pattern.edges))
        return ShrinkResult(pattern, tuple(events), poly, cfg, tuple(terminals))


def shrink(poly: LangPolygon, tree: ShadowTree, cfg: Optional[ShrinkConfig] = None,
           provenance: Optional[Dict[str, str]] = None) -> ShrinkResult:
    """
    Shrink a Lang polygon into a crease pattern.

    Args:
        poly: Lang polygon satisfying d_P >= d_T against tree
        tree: Shadow tree the polygon was built from
        cfg: Engine configuration (defaults derived from the polygon)
        provenance: Source identifiers stored on the crease pattern

    Returns:
        ShrinkResult; unpacks as (pattern, events)
    """
    resolved = (cfg or ShrinkConfig()).resolve(poly)
    return MoleculeEngine(tree, resolved).run(poly, provenance)
