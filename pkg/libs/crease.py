"""
Crease pattern graph for FoldMark.
Holds the undirected crease graph, its complex-number encoding, canonical
JSON persistence, SVG rendering and a planarity check.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from .errors import CreaseFormatError

logger = logging.getLogger(__name__)

SCHEMA = 'foldmark.crease/1'


class NodeKind(str, Enum):
    BOUNDARY_LEAF = 'boundary_leaf'
    MERGE = 'merge'
    SPLIT_ENDPOINT = 'split_endpoint'
    SPLIT_INTERMEDIATE = 'split_intermediate'
    TERMINAL = 'terminal'


class EdgeKind(str, Enum):
    BOUNDARY = 'boundary'
    TRAJECTORY = 'trajectory'
    SPLIT_CHORD = 'split_chord'


@dataclass(frozen=True)
class CreaseNode:
    id: int
    x: float
    y: float
    kind: NodeKind

    @property
    def point(self) -> Tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class CreaseEdge:
    """Undirected crease edge; endpoints are stored with a < b."""
    a: int
    b: int
    kind: EdgeKind

    def __post_init__(self):
        if self.a == self.b:
            raise CreaseFormatError(f"self-loop on node {self.a}")
        if self.a > self.b:
            first, second = self.b, self.a
            object.__setattr__(self, 'a', first)
            object.__setattr__(self, 'b', second)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.a, self.b)


@dataclass(frozen=True)
class CreasePattern:
    """
    Undirected, simple, connected crease graph.

    Nodes are kept sorted by id and edges lexicographically by (a, b).
    Validation errors name the offending element by its JSON path in the
    order the elements were given.
    """
    nodes: Tuple[CreaseNode, ...]
    edges: Tuple[CreaseEdge, ...]
    provenance: Dict[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        seen: Dict[int, int] = {}
        for index, node in enumerate(self.nodes):
            if node.id in seen:
                raise CreaseFormatError(f"duplicate node id {node.id}", f"$.nodes[{index}]")
            if not (math.isfinite(node.x) and math.isfinite(node.y)):
                raise CreaseFormatError(f"node {node.id} has non-finite coordinates",
                                        f"$.nodes[{index}]")
            seen[node.id] = index
        pairs = set()
        for index, edge in enumerate(self.edges):
            for endpoint in (edge.a, edge.b):
                if endpoint not in seen:
                    raise CreaseFormatError(f"edge references unknown node {endpoint}",
                                            f"$.edges[{index}]")
            if edge.key in pairs:
                raise CreaseFormatError(f"duplicate edge ({edge.a}, {edge.b})", f"$.edges[{index}]")
            pairs.add(edge.key)

        graph = nx.Graph()
        graph.add_nodes_from(seen)
        graph.add_edges_from(pairs)
        if graph.number_of_nodes() and not nx.is_connected(graph):
            raise CreaseFormatError("crease graph is not connected", "$.edges")

        object.__setattr__(self, 'nodes', tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, 'edges', tuple(sorted(self.edges, key=lambda e: e.key)))
        object.__setattr__(self, 'provenance', {str(k): str(v) for k, v in self.provenance.items()})

    @property
    def node_map(self) -> Dict[int, CreaseNode]:
        return {node.id: node for node in self.nodes}

    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        for node in self.nodes:
            graph.add_node(node.id, x=node.x, y=node.y, kind=node.kind.value)
        for edge in self.edges:
            graph.add_edge(edge.a, edge.b, kind=edge.kind.value)
        return graph

    def count_nodes(self, kind: NodeKind) -> int:
        return sum(1 for node in self.nodes if node.kind == kind)

    def count_edges(self, kind: EdgeKind) -> int:
        return sum(1 for edge in self.edges if edge.kind == kind)

    def bounds(self) -> Tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the node set."""
        xs = [node.x for node in self.nodes]
        ys = [node.y for node in self.nodes]
        return (min(xs), min(ys), max(xs), max(ys))


class CreasePatternBuilder:
    """Accumulates nodes and edges with sequential ids; duplicate edges and self-loops are dropped."""

    def __init__(self):
        self._nodes: List[CreaseNode] = []
        self._edges: Dict[Tuple[int, int], EdgeKind] = {}

    def add_node(self, point: Sequence[float], kind: NodeKind) -> int:
        node_id = len(self._nodes)
        self._nodes.append(CreaseNode(node_id, float(point[0]), float(point[1]), kind))
        return node_id

    def node(self, node_id: int) -> CreaseNode:
        return self._nodes[node_id]

    def add_edge(self, a: int, b: int, kind: EdgeKind):
        if a == b:
            return
        key = (min(a, b), max(a, b))
        self._edges.setdefault(key, kind)

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    def build(self, provenance: Optional[Mapping[str, str]] = None) -> CreasePattern:
        edges = tuple(CreaseEdge(a, b, kind) for (a, b), kind in self._edges.items())
        return CreasePattern(tuple(self._nodes), edges, dict(provenance or {}))


@dataclass(frozen=True)
class ComplexEncoding:
    """
    Complex view of a crease pattern.

    node_codes[k] = x + iy for the node with id node_ids[k] (ascending);
    edge_codes hold id_1 + i*id_2 with id_1 < id_2 in lexicographic order.
    """
    node_ids: Tuple[int, ...]
    node_codes: np.ndarray = field(compare=False)
    edge_codes: np.ndarray = field(compare=False)


def encode_complex(pattern: CreasePattern) -> ComplexEncoding:
    node_codes = np.array([complex(node.x, node.y) for node in pattern.nodes], dtype=complex)
    edge_codes = np.array([complex(edge.a, edge.b) for edge in pattern.edges], dtype=complex)
    return ComplexEncoding(tuple(node.id for node in pattern.nodes), node_codes, edge_codes)


def decode_complex(encoding: ComplexEncoding, node_kinds: Sequence[Union[NodeKind, str]],
                   edge_kinds: Sequence[Union[EdgeKind, str]],
                   provenance: Optional[Mapping[str, str]] = None) -> CreasePattern:
    """
    Rebuild a pattern from its complex encoding.

    Kinds are not part of the encoding and must be supplied in encoding order.
    """
    if len(node_kinds) != len(encoding.node_codes) or len(edge_kinds) != len(encoding.edge_codes):
        raise CreaseFormatError("kind lists do not match the encoding lengths")
    nodes = tuple(CreaseNode(node_id, float(code.real), float(code.imag), NodeKind(kind))
                  for node_id, code, kind in zip(encoding.node_ids, encoding.node_codes, node_kinds))
    edges = tuple(CreaseEdge(int(round(code.real)), int(round(code.imag)), EdgeKind(kind))
                  for code, kind in zip(encoding.edge_codes, edge_kinds))
    return CreasePattern(nodes, edges, dict(provenance or {}))


def pattern_to_dict(pattern: CreasePattern) -> Dict[str, Any]:
    return {
        'schema': SCHEMA,
        'provenance': dict(pattern.provenance),
        'nodes': [{'id': n.id, 'x': n.x, 'y': n.y, 'kind': n.kind.value} for n in pattern.nodes],
        'edges': [{'a': e.a, 'b': e.b, 'kind': e.kind.value} for e in pattern.edges],
    }


def serialize(pattern: CreasePattern) -> bytes:
    """Canonical JSON: sorted keys, nodes by id, edges lexicographic."""
    return (json.dumps(pattern_to_dict(pattern), sort_keys=True, indent=2) + '\n').encode('utf-8')


def _require(obj: Mapping[str, Any], key: str, kind: type, path: str) -> Any:
    if key not in obj:
        raise CreaseFormatError(f"missing field '{key}'", path)
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CreaseFormatError(f"field '{key}' must be a number", f"{path}.{key}")
        return float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise CreaseFormatError(f"field '{key}' must be an integer", f"{path}.{key}")
    if not isinstance(value, kind):
        raise CreaseFormatError(f"field '{key}' must be {kind.__name__}", f"{path}.{key}")
    return value


def deserialize(data: Union[bytes, str]) -> CreasePattern:
    """
    Parse a crease-pattern JSON document.

    Raises:
        CreaseFormatError: Malformed JSON or schema violation, with its JSON path
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CreaseFormatError(f"invalid JSON: {e}")
    if not isinstance(doc, dict):
        raise CreaseFormatError("document root must be an object")
    if doc.get('schema') != SCHEMA:
        raise CreaseFormatError(f"unsupported schema {doc.get('schema')!r}", '$.schema')

    raw_nodes = _require(doc, 'nodes', list, '$')
    raw_edges = _require(doc, 'edges', list, '$')
    provenance = doc.get('provenance', {})
    if not isinstance(provenance, dict):
        raise CreaseFormatError("provenance must be an object", '$.provenance')

    nodes = []
    for index, raw in enumerate(raw_nodes):
        path = f"$.nodes[{index}]"
        if not isinstance(raw, dict):
            raise CreaseFormatError("node must be an object", path)
        kind = _require(raw, 'kind', str, path)
        try:
            node_kind = NodeKind(kind)
        except ValueError:
            raise CreaseFormatError(f"unknown node kind {kind!r}", f"{path}.kind")
        nodes.append(CreaseNode(_require(raw, 'id', int, path), _require(raw, 'x', float, path),
                                _require(raw, 'y', float, path), node_kind))

    edges = []
    for index, raw in enumerate(raw_edges):
        path = f"$.edges[{index}]"
        if not isinstance(raw, dict):
            raise CreaseFormatError("edge must be an object", path)
        kind = _require(raw, 'kind', str, path)
        try:
            edge_kind = EdgeKind(kind)
        except ValueError:
            raise CreaseFormatError(f"unknown edge kind {kind!r}", f"{path}.kind")
        a, b = _require(raw, 'a', int, path), _require(raw, 'b', int, path)
        if a == b:
            raise CreaseFormatError(f"self-loop on node {a}", path)
        edges.append(CreaseEdge(a, b, edge_kind))

    return CreasePattern(tuple(nodes), tuple(edges), provenance)


PALETTES: Dict[str, Dict[str, Any]] = {
    'default': {
        'edges': {
            EdgeKind.BOUNDARY: '#1f2933',
            EdgeKind.TRAJECTORY: '#d64545',
            EdgeKind.SPLIT_CHORD: '#2f6fde',
        },
        'nodes': {
            NodeKind.BOUNDARY_LEAF: '#1f2933',
            NodeKind.MERGE: '#d64545',
            NodeKind.SPLIT_ENDPOINT: '#e39a2d',
            NodeKind.SPLIT_INTERMEDIATE: '#2f6fde',
            NodeKind.TERMINAL: '#3f9142',
        },
        'dash': {},
    },
    'mono': {
        'edges': {kind: '#000000' for kind in EdgeKind},
        'nodes': {kind: '#000000' for kind in NodeKind},
        'dash': {EdgeKind.TRAJECTORY: '4 2', EdgeKind.SPLIT_CHORD: '1 2'},
    },
}


def to_svg(pattern: CreasePattern, palette: str = 'default', stroke_width: float = 0.004,
           node_radius: float = 0.008, precision: int = 6) -> bytes:
    """
    Render the pattern as SVG 1.1.

    The viewBox is the node bounding box padded by 5%, with y pointing up.
    stroke_width and node_radius are fractions of the larger view dimension.
    """
    if palette not in PALETTES:
        raise CreaseFormatError(f"unknown palette {palette!r}")
    colors = PALETTES[palette]

    def fmt(value: float) -> str:
        return f"{value:.{precision}g}"

    min_x, min_y, max_x, max_y = pattern.bounds()
    width, height = max_x - min_x, max_y - min_y
    span = max(width, height) or 1.0
    pad = 0.05 * span
    view = (min_x - pad, -max_y - pad, width + 2 * pad, height + 2 * pad)
    size = max(view[2], view[3])
    nodes = pattern.node_map

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{" ".join(fmt(v) for v in view)}">',
        f'<g fill="none" stroke-width="{fmt(stroke_width * size)}" stroke-linecap="round">',
    ]
    for edge in pattern.edges:
        a, b = nodes[edge.a], nodes[edge.b]
        dash = colors['dash'].get(edge.kind)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ''
        lines.append(
            f'<line x1="{fmt(a.x)}" y1="{fmt(-a.y)}" x2="{fmt(b.x)}" y2="{fmt(-b.y)}" '
            f'stroke="{colors["edges"][edge.kind]}" class="{edge.kind.value}"{dash_attr}/>')
    lines.append('</g>')
    lines.append('<g stroke="none">')
    for node in pattern.nodes:
        lines.append(
            f'<circle cx="{fmt(node.x)}" cy="{fmt(-node.y)}" r="{fmt(node_radius * size)}" '
            f'fill="{colors["nodes"][node.kind]}" class="{node.kind.value}"/>')
    lines.append('</g>')
    lines.append('</svg>')
    return ('\n'.join(lines) + '\n').encode('utf-8')


def find_crossings(pattern: CreasePattern, tol: float = 1e-7) -> List[Tuple[CreaseEdge, CreaseEdge]]:
    """
    Pairs of non-incident edges that meet at interior points.

    Contacts closer than tol to an edge endpoint are ignored; collinear edges
    overlapping by more than tol count as crossings.
    """
    edges = list(pattern.edges)
    if len(edges) < 2:
        return []
    nodes = pattern.node_map
    start = np.array([nodes[e.a].point for e in edges])
    end = np.array([nodes[e.b].point for e in edges])
    r = end - start
    length = np.linalg.norm(r, axis=1)

    crossings = []
    for i in range(len(edges) - 1):
        j = np.arange(i + 1, len(edges))
        incident = np.array([bool({edges[i].a, edges[i].b} & {edges[k].a, edges[k].b}) for k in j])
        s = r[j]
        qp = start[j] - start[i]
        denom = r[i, 0] * s[:, 1] - r[i, 1] * s[:, 0]
        cross_qs = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
        cross_qr = qp[:, 0] * r[i, 1] - qp[:, 1] * r[i, 0]
        with np.errstate(divide='ignore', invalid='ignore'):
            t = cross_qs / denom
            u = cross_qr / denom
        scale = length[i] * length[j]
        parallel = np.abs(denom) <= 1e-12 * np.maximum(scale, 1e-300)
        proper = (~parallel
                  & (t * length[i] > tol) & ((1 - t) * length[i] > tol)
                  & (u * length[j] > tol) & ((1 - u) * length[j] > tol))

        overlap = np.zeros(len(j), dtype=bool)
        if length[i] > 0:
            direction = r[i] / length[i]
            offset = np.abs(qp[:, 0] * direction[1] - qp[:, 1] * direction[0])
            lo = qp @ direction
            hi = (end[j] - start[i]) @ direction
            seg_lo, seg_hi = np.minimum(lo, hi), np.maximum(lo, hi)
            shared = np.minimum(seg_hi, length[i]) - np.maximum(seg_lo, 0.0)
            overlap = parallel & (offset <= tol) & (shared > tol)

        for k in j[(proper | overlap) & ~incident]:
            crossings.append((edges[i], edges[int(k)]))
    return crossings


def kind_counts(items: Iterable[Union[CreaseNode, CreaseEdge]]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for item in items:
        counts[item.kind.value] = counts.get(item.kind.value, 0) + 1
    return dict(sorted(counts.items()))
