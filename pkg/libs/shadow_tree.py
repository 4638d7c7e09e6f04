"""
Shadow tree (metric tree) construction for FoldMark.
Topologies are declarative JSON documents; the tree metric is the Euclidean
distance between connected node positions in the frame's native dimensionality.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Tuple, Union

import networkx as nx
import numpy as np

from .errors import TopologyError, TreeError, UnknownNodeError
from .landmarks import LandmarkFrame, Region

logger = logging.getLogger(__name__)

NodeLabel = Union[int, str]
SIDES = ('top', 'right', 'bottom', 'left', 'lateral')


@dataclass(frozen=True)
class InternalNodeSpec:
    """Named junction placed at the centroid of a landmark group."""
    name: str
    centroid_of: Tuple[int, ...]
    neighbors: Tuple[NodeLabel, ...]


@dataclass(frozen=True)
class TreeTopology:
    """
    Declarative adjacency spec for a shadow tree.

    Leaves are landmark ids in declaration order. Each internal node lists its
    neighbours (landmark ids or internal names) in cyclic order; that order is
    the embedding the leaf cycle walks.
    """
    name: str
    leaves: Tuple[int, ...]
    internal_nodes: Tuple[InternalNodeSpec, ...]
    mirror_leaves: Tuple[Tuple[int, int], ...] = ()
    mirror_internals: Tuple[Tuple[str, str], ...] = ()
    sides: Dict[str, str] = field(default_factory=dict, hash=False)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'TreeTopology':
        """Build and validate a topology from its JSON document."""
        if not isinstance(doc, dict):
            raise TopologyError("topology must be a JSON object")
        try:
            leaves = tuple(int(i) for i in doc['leaves'])
            internals = tuple(
                InternalNodeSpec(
                    name=str(node['name']),
                    centroid_of=tuple(int(i) for i in node['centroid_of']),
                    neighbors=tuple(n if isinstance(n, str) else int(n)
                                    for n in node['neighbors']))
                for node in doc['internal_nodes'])
        except (KeyError, TypeError, ValueError) as e:
            raise TopologyError(f"malformed topology: {e}")

        mirror = doc.get('mirror', {}) or {}
        topology = cls(
            name=str(doc.get('name', 'unnamed')),
            leaves=leaves,
            internal_nodes=internals,
            mirror_leaves=tuple((int(a), int(b)) for a, b in mirror.get('leaves', [])),
            mirror_internals=tuple((str(a), str(b)) for a, b in mirror.get('internal_nodes', [])),
            sides={str(k): str(v) for k, v in (doc.get('sides') or {}).items()})
        topology.validate()
        return topology

    def validate(self):
        """
        Check the adjacency spec describes a tree whose landmark leaves have degree 1.

        Raises:
            TopologyError: On any structural problem
        """
        if len(set(self.leaves)) != len(self.leaves):
            raise TopologyError("duplicate leaf ids in topology")
        names = [node.name for node in self.internal_nodes]
        if len(set(names)) != len(names):
            raise TopologyError("duplicate internal node names in topology")
        if not self.internal_nodes:
            raise TopologyError("topology needs at least one internal node")

        leaf_set = set(self.leaves)
        name_set = set(names)
        owner: Dict[int, str] = {}
        links: Set[Tuple[str, str]] = set()
        for node in self.internal_nodes:
            if not node.centroid_of:
                raise TopologyError(f"internal node {node.name} has an empty centroid group")
            if len(set(node.neighbors)) != len(node.neighbors):
                raise TopologyError(f"internal node {node.name} lists a neighbour twice")
            if len(node.neighbors) < 2:
                raise TopologyError(f"internal node {node.name} is dangling (fewer than 2 neighbours)")
            for neighbor in node.neighbors:
                if isinstance(neighbor, str):
                    if neighbor not in name_set or neighbor == node.name:
                        raise TopologyError(f"internal node {node.name} links unknown node {neighbor!r}")
                    links.add((node.name, neighbor))
                else:
                    if neighbor not in leaf_set:
                        raise TopologyError(f"internal node {node.name} links undeclared leaf {neighbor}")
                    if neighbor in owner:
                        raise TopologyError(
                            f"leaf {neighbor} attached to both {owner[neighbor]} and {node.name}")
                    owner[neighbor] = node.name

        missing = leaf_set - set(owner)
        if missing:
            raise TopologyError(f"leaves not attached to any internal node: {sorted(missing)}")
        for a, b in links:
            if (b, a) not in links:
                raise TopologyError(f"link {a} -> {b} is not declared by {b}")

        graph = nx.Graph()
        graph.add_nodes_from(self.leaves)
        graph.add_nodes_from(names)
        graph.add_edges_from(owner.items())
        graph.add_edges_from(links)
        if not nx.is_tree(graph):
            raise TopologyError(f"topology {self.name} does not describe a tree")

        for region, side in self.sides.items():
            if side not in SIDES:
                raise TopologyError(f"region {region} mapped to unknown side {side!r}")
        for a, b in self.mirror_leaves:
            if a not in leaf_set or b not in leaf_set:
                raise TopologyError(f"mirror pair ({a}, {b}) references an undeclared leaf")
        for a, b in self.mirror_internals:
            if a not in name_set or b not in name_set:
                raise TopologyError(f"mirror pair ({a}, {b}) references an unknown internal node")

    @property
    def referenced_landmarks(self) -> Set[int]:
        ids = set(self.leaves)
        for node in self.internal_nodes:
            ids.update(node.centroid_of)
        return ids

    def mirror_map(self) -> Dict[NodeLabel, NodeLabel]:
        """Symmetric relabeling; labels without a declared partner map to themselves."""
        mapping: Dict[NodeLabel, NodeLabel] = {}
        for a, b in list(self.mirror_leaves) + list(self.mirror_internals):
            mapping[a] = b
            mapping[b] = a
        return mapping

    def landmark_mirror_pairs(self) -> Dict[int, int]:
        mapping = {}
        for a, b in self.mirror_leaves:
            mapping[a] = b
            mapping[b] = a
        return mapping

    def edge_labels(self) -> Set[frozenset]:
        edges = set()
        for node in self.internal_nodes:
            for neighbor in node.neighbors:
                edges.add(frozenset((node.name, neighbor)))
        return edges

    def check_mirror_symmetry(self) -> bool:
        """True when the symmetry relabeling maps the edge set onto itself."""
        mapping = self.mirror_map()
        edges = self.edge_labels()
        mirrored = {frozenset(mapping.get(label, label) for label in edge) for edge in edges}
        return mirrored == edges


def load_topology(path: Union[str, Path]) -> TreeTopology:
    """
    Load a topology JSON file.

    Raises:
        TopologyError: File missing or malformed
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise TopologyError(f"topology file not found: {path}")
    except json.JSONDecodeError as e:
        raise TopologyError(f"invalid JSON in {path}: {e}")
    return TreeTopology.from_dict(doc)


@dataclass(frozen=True)
class TreeNode:
    """Tree node: a landmark leaf or a synthetic internal junction."""
    index: int
    label: NodeLabel
    position: Tuple[float, ...]
    region: Optional[Region] = None

    @property
    def is_leaf(self) -> bool:
        return not isinstance(self.label, str)


@dataclass(frozen=True)
class TreeEdge:
    u: int
    v: int
    length: float


@dataclass(frozen=True)
class ShadowTree:
    """
    Metric tree over landmark leaves and internal junctions.

    Node indices: leaves 0..p-1 in topology declaration order, internals after.
    """
    leaves: Tuple[TreeNode, ...]
    internals: Tuple[TreeNode, ...]
    edges: Tuple[TreeEdge, ...]
    topology_id: str
    rotation: Tuple[Tuple[int, ...], ...] = field(repr=False)
    sides: Dict[str, str] = field(default_factory=dict, hash=False, repr=False)
    _graph: Any = field(init=False, repr=False, compare=False, hash=False)
    _distances: Any = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        n = len(self.leaves) + len(self.internals)
        graph = nx.Graph()
        graph.add_nodes_from(range(n))
        for edge in self.edges:
            if edge.length < 0 or not np.isfinite(edge.length):
                raise TreeError(f"edge ({edge.u}, {edge.v}) has invalid length {edge.length}")
            graph.add_edge(edge.u, edge.v, weight=edge.length)
        if not nx.is_tree(graph):
            raise TreeError("shadow tree must be connected and acyclic")
        for leaf in self.leaves:
            if graph.degree(leaf.index) != 1:
                raise TreeError(f"leaf {leaf.label} has degree {graph.degree(leaf.index)}")
        for edge in self.edges:
            recomputed = float(np.linalg.norm(
                np.subtract(self.node(edge.u).position, self.node(edge.v).position)))
            if abs(recomputed - edge.length) > 1e-9:
                raise TreeError(f"edge ({edge.u}, {edge.v}) length disagrees with node positions")

        distances = np.zeros((n, n))
        for source, lengths in nx.all_pairs_dijkstra_path_length(graph):
            for target, value in lengths.items():
                distances[source, target] = value
        distances.setflags(write=False)
        object.__setattr__(self, '_graph', nx.freeze(graph))
        object.__setattr__(self, '_distances', distances)

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    @property
    def node_count(self) -> int:
        return len(self.leaves) + len(self.internals)

    @property
    def graph(self) -> nx.Graph:
        """Frozen weighted networkx view of the tree."""
        return self._graph

    def node(self, index: int) -> TreeNode:
        if not isinstance(index, (int, np.integer)) or not 0 <= index < self.node_count:
            raise UnknownNodeError(f"unknown tree node {index!r}")
        if index < len(self.leaves):
            return self.leaves[index]
        return self.internals[index - len(self.leaves)]

    def node_index(self, label: NodeLabel) -> int:
        """Index of the node with a landmark id or internal name."""
        for node in self.leaves + self.internals:
            if node.label == label:
                return node.index
        raise UnknownNodeError(f"no tree node labeled {label!r}")

    def path(self, a: int, b: int) -> List[int]:
        """Node indices along the unique path from a to b."""
        self.node(a)
        self.node(b)
        return list(nx.shortest_path(self._graph, a, b))

    def leaf_distance_matrix(self) -> np.ndarray:
        """d_T between every pair of leaves, indexed by leaf node index."""
        p = len(self.leaves)
        return self._distances[:p, :p].copy()

    def total_length(self) -> float:
        return float(sum(edge.length for edge in self.edges))


def build_shadow_tree(frame: LandmarkFrame, topology: TreeTopology) -> ShadowTree:
    """
    Build the metric shadow tree of a (nose-normalized) frame.

    Args:
        frame: Landmark frame providing leaf and centroid positions
        topology: Adjacency spec

    Returns:
        ShadowTree with Euclidean edge lengths

    Raises:
        TopologyError: The topology references a landmark missing from the frame
        TreeError: The resulting graph is not a tree
    """
    available = set(frame.ids)
    missing = sorted(topology.referenced_landmarks - available)
    if missing:
        raise TopologyError(f"topology references missing landmark id {missing[0]}",
                            landmark_ids=missing)

    regions = frame.regions
    index_of: Dict[NodeLabel, int] = {}
    leaves = []
    for index, landmark_id in enumerate(topology.leaves):
        index_of[landmark_id] = index
        position = tuple(float(c) for c in frame.position_of(landmark_id))
        leaves.append(TreeNode(index, landmark_id, position, regions[landmark_id]))

    internals = []
    offset = len(leaves)
    for k, spec in enumerate(topology.internal_nodes):
        index_of[spec.name] = offset + k
        centroid = np.mean([frame.position_of(i) for i in spec.centroid_of], axis=0)
        internals.append(TreeNode(offset + k, spec.name, tuple(float(c) for c in centroid)))

    nodes = leaves + internals
    edges: List[TreeEdge] = []
    seen: Set[Tuple[int, int]] = set()
    rotation: List[Tuple[int, ...]] = [()] * len(nodes)
    for spec in topology.internal_nodes:
        u = index_of[spec.name]
        rotation[u] = tuple(index_of[n] for n in spec.neighbors)
        for neighbor in spec.neighbors:
            v = index_of[neighbor]
            key = (min(u, v), max(u, v))
            if key in seen:
                continue
            seen.add(key)
            length = float(np.linalg.norm(
                np.subtract(nodes[key[0]].position, nodes[key[1]].position)))
            edges.append(TreeEdge(key[0], key[1], length))
            if not isinstance(neighbor, str):
                rotation[v] = (u,)

    tree = ShadowTree(tuple(leaves), tuple(internals), tuple(edges), topology.name,
                      tuple(rotation), dict(topology.sides))
    logger.debug("shadow tree %s: %d leaves, %d internals, total length %.6g",
                 topology.name, len(leaves), len(internals), tree.total_length())
    return tree


def tree_distance(tree: ShadowTree, a: int, b: int) -> float:
    """
    Sum of edge lengths on the unique path between nodes a and b.

    Raises:
        UnknownNodeError: Either node index is not in the tree
    """
    tree.node(a)
    tree.node(b)
    return float(tree._distances[a, b])


def leaf_cycle(tree: ShadowTree) -> List[int]:
    """
    Doubling-cycle leaf order.

    Walks the tree boundary starting at leaf 0: on arriving at a node from u,
    leave through the neighbour that follows u in the node's cyclic order.
    """
    p = len(tree.leaves)
    if p == 0:
        return []
    order = [0]
    previous, current = 0, tree.rotation[0][0]
    # each edge is walked twice
    for _ in range(2 * len(tree.edges)):
        if current == 0:
            break
        if current < p:
            order.append(current)
            previous, current = current, tree.rotation[current][0]
            continue
        neighbors = tree.rotation[current]
        position = neighbors.index(previous)
        previous, current = current, neighbors[(position + 1) % len(neighbors)]
    return order
