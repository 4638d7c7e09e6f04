"""
Pytest configuration and fixtures for FoldMark tests.
"""
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest
import yaml

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from libs.config_loader import ConfigLoader
from libs.landmarks import canonical_layout
from libs.shadow_tree import ShadowTree, TreeEdge, TreeNode, build_shadow_tree, load_topology

FACE_TOPOLOGY = project_root / 'templates' / 'topologies' / 'face37.json'


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end checks that take minutes')


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def sample_config():
    """Sample configuration for testing."""
    return {
        'paths': {
            'topology': str(FACE_TOPOLOGY),
            'log_file': '/tmp/foldmark-test.log'
        },
        'polygon': {'margin': 0.05, 'min_aspect': 0.25, 'max_aspect': 4.0},
        'shrink': {'th': None, 'step': None, 'refine_tol': 1e-9,
                   'max_events': None, 'tree_metric': 'reduced'},
        'descriptors': {'n_max': 128, 'e_max': 256, 'strict_formula': False, 'pca_dims': None},
        'classifier': {'k': 5, 'c': 1.0, 'seed': 0, 'kernel': 'quadratic',
                       'tol': 1e-3, 'max_iterations': 100000},
        'synthetic': {'class_count': 4, 'frames': 4, 'dimensions': 2,
                      'intensity_range': [0.6, 1.0]},
        'pipeline': {'alignment': 'neutral', 'jobs': 1},
        'display': {'terminal_width': 120, 'stretch_to_terminal': False,
                    'decimal_places': 3, 'colored_mode': False,
                    'good_score': 0.85, 'poor_score': 0.5},
        'tables': {'bordered_style': 'heavy', 'header_style': 'bold',
                   'number_alignment': 'right'},
        'debug': {'enabled': False},
        'logging': {
            'level': 'INFO',
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            'file_logging': False,
            'console_logging': True
        }
    }


@pytest.fixture
def config_loader(sample_config, temp_dir):
    """ConfigLoader instance with test configuration."""
    config_file = os.path.join(temp_dir, 'test_config.yaml')
    with open(config_file, 'w') as f:
        yaml.dump(sample_config, f)

    return ConfigLoader(config_file)


@pytest.fixture
def global_config(config_loader, monkeypatch):
    """Install the test configuration as the process-wide loader."""
    import libs.config_loader as config_module
    import libs.rich_display as display_module
    import libs.score_formatter as formatter_module
    monkeypatch.setattr(config_module, '_config_loader', config_loader)
    monkeypatch.setattr(display_module, '_rich_display', None)
    monkeypatch.setattr(formatter_module, '_score_formatter', None)
    return config_loader


@pytest.fixture(scope='session')
def face_topology():
    """The bundled 37-landmark face topology."""
    return load_topology(FACE_TOPOLOGY)


@pytest.fixture
def canonical_frame():
    """Canonical neutral face, 2D."""
    return canonical_layout(2)


@pytest.fixture
def face_tree(face_topology, canonical_frame):
    """Shadow tree of the canonical face."""
    return build_shadow_tree(canonical_frame, face_topology)


def make_tree(leaf_positions, internal_positions, parent_of_leaf, internal_edges,
              topology_id='test'):
    """
    Build a ShadowTree from explicit positions.

    Leaves are indices 0..p-1 and internals p..; parent_of_leaf gives the
    internal index each leaf hangs from; internal_edges are index pairs.
    Rotations follow the angular order of neighbours around each internal node.
    """
    p = len(leaf_positions)
    positions = [tuple(map(float, pt)) for pt in leaf_positions] + \
        [tuple(map(float, pt)) for pt in internal_positions]
    leaves = tuple(TreeNode(i, i, positions[i]) for i in range(p))
    internals = tuple(TreeNode(p + k, f"n{k}", positions[p + k])
                      for k in range(len(internal_positions)))
    pairs = [(leaf, parent) for leaf, parent in enumerate(parent_of_leaf)] + list(internal_edges)
    edges = []
    neighbours = {i: [] for i in range(len(positions))}
    for u, v in pairs:
        a, b = min(u, v), max(u, v)
        edges.append(TreeEdge(a, b, float(np.linalg.norm(np.subtract(positions[a], positions[b])))))
        neighbours[u].append(v)
        neighbours[v].append(u)

    rotation = []
    for i in range(len(positions)):
        origin = positions[i]
        ordered = sorted(neighbours[i], key=lambda n: math.atan2(
            positions[n][1] - origin[1], positions[n][0] - origin[0]))
        rotation.append(tuple(ordered))
    return ShadowTree(leaves, internals, tuple(edges), topology_id, tuple(rotation))


def star_tree(p, radius=1.0):
    """p leaves on a circle around a single internal node at the origin."""
    leaves = [(radius * math.cos(2 * math.pi * k / p), radius * math.sin(2 * math.pi * k / p))
              for k in range(p)]
    return make_tree(leaves, [(0.0, 0.0)], [p] * p, [], topology_id=f"star{p}")


def random_tree(seed, leaf_count):
    """Random planar-ish tree with leaf_count leaves and up to leaf_count // 2 internals."""
    rng = np.random.default_rng(seed)
    internal_count = int(rng.integers(1, max(2, leaf_count // 2) + 1))
    internal_positions = rng.normal(0.0, 1.0, size=(internal_count, 2))
    internal_edges = []
    degree = [0] * internal_count
    for k in range(1, internal_count):
        parent = int(rng.integers(0, k))
        internal_edges.append((leaf_count + parent, leaf_count + k))
        degree[parent] += 1
        degree[k] += 1

    # internals that would otherwise dangle get a leaf first
    parent_of_leaf = [k for k in range(internal_count) if degree[k] <= 1]
    parent_of_leaf = parent_of_leaf[:leaf_count]
    while len(parent_of_leaf) < leaf_count:
        parent_of_leaf.append(int(rng.integers(0, internal_count)))
    parent_of_leaf = [leaf_count + k for k in parent_of_leaf]

    leaf_positions = []
    for parent in parent_of_leaf:
        angle = rng.uniform(0.0, 2.0 * math.pi)
        length = rng.uniform(0.3, 1.5)
        base = internal_positions[parent - leaf_count]
        leaf_positions.append((base[0] + length * math.cos(angle), base[1] + length * math.sin(angle)))
    return make_tree(leaf_positions, internal_positions, parent_of_leaf, internal_edges,
                     topology_id=f"random{seed}")


@pytest.fixture
def tree_factory():
    """Factory for random trees: tree_factory(seed, leaf_count)."""
    return random_tree
