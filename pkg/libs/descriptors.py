"""
Feature vectors for FoldMark.
DTNnp displacement features, the fixed-length origami descriptor of a crease
pattern, PCA reduction and concatenation of descriptor blocks.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.decomposition import PCA as PrincipalComponents

from .crease import CreasePattern
from .errors import DescriptorError, LayoutCapacityError
from .landmarks import LandmarkFrame, normalize_to_nose

logger = logging.getLogger(__name__)

DTNNP = 'dtnnp'
ORIGAMI = 'origami'
COMBINED = 'combined'
PCA = 'pca'

_ORIGAMI_ID = re.compile(r'^origami\[n=(\d+),e=(\d+)\]$')


@dataclass(frozen=True)
class DescriptorLayout:
    """Slot capacities of the origami descriptor."""
    n_max: int = 128
    e_max: int = 256

    def __post_init__(self):
        if self.n_max < 1 or self.e_max < 0:
            raise DescriptorError(f"invalid origami layout n_max={self.n_max}, e_max={self.e_max}")

    @property
    def length(self) -> int:
        return 2 * self.n_max + 2 * self.e_max

    @property
    def descriptor_id(self) -> str:
        return f"{ORIGAMI}[n={self.n_max},e={self.e_max}]"

    @classmethod
    def from_descriptor_id(cls, descriptor_id: str) -> 'DescriptorLayout':
        match = _ORIGAMI_ID.match(descriptor_id)
        if not match:
            raise DescriptorError(f"not an origami descriptor id: {descriptor_id!r}")
        return cls(int(match.group(1)), int(match.group(2)))

    def column_names(self) -> Tuple[str, ...]:
        names = []
        for k in range(self.n_max):
            names.extend((f"origami_n{k}_x", f"origami_n{k}_y"))
        for k in range(self.e_max):
            names.extend((f"origami_e{k}_a", f"origami_e{k}_b"))
        return tuple(names)


@dataclass(frozen=True)
class FeatureVector:
    """
    Classifier-ready row vector.

    Attributes:
        values: Feature values
        descriptor_id: 'dtnnp', 'origami[n=..,e=..]', 'pca[..]' or 'combined'
        column_names: One name per value
    """
    values: np.ndarray = field(compare=False)
    descriptor_id: str
    column_names: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        if not self.column_names:
            object.__setattr__(self, 'column_names',
                               tuple(f"f{k}" for k in range(len(values))))
        if len(self.column_names) != len(values):
            raise DescriptorError(
                f"{self.descriptor_id}: {len(self.column_names)} column names for {len(values)} values")

    @property
    def family(self) -> str:
        return self.descriptor_id.split('[', 1)[0]

    @property
    def length(self) -> int:
        return len(self.values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def dtnnp(neutral: LandmarkFrame, peak: LandmarkFrame, strict: bool = False) -> FeatureVector:
    """
    Per-landmark displacement between the nose-normalized neutral and peak frames.

    Args:
        neutral: Neutral frame
        peak: Peak frame with the same landmark ids
        strict: Subtract the squared y difference instead of adding it; negative
            radicands give NaN

    Returns:
        One value per landmark in ascending id order, the reference nose excluded

    Raises:
        DescriptorError: Frames have different landmark ids or dimensionality
    """
    if neutral.ids != peak.ids:
        raise DescriptorError("neutral and peak frames have different landmark ids")
    if neutral.dimensionality != peak.dimensionality:
        raise DescriptorError("neutral and peak frames have different dimensionality")

    a = normalize_to_nose(neutral)
    b = normalize_to_nose(peak)
    keep = np.array([landmark_id != a.nose_id for landmark_id in a.ids])
    diff = (b.positions - a.positions)[keep]
    if strict:
        squared = diff ** 2
        radicand = squared[:, 0] - squared[:, 1] + squared[:, 2:].sum(axis=1)
        with np.errstate(invalid='ignore'):
            values = np.sqrt(radicand)
    else:
        values = np.linalg.norm(diff, axis=1)
    names = tuple(f"dtnnp_l{i}" for i, k in zip(a.ids, keep) if k)
    return FeatureVector(values, DTNNP, names)


def origami_descriptor(pattern: CreasePattern, layout: Optional[DescriptorLayout] = None) -> FeatureVector:
    """
    Flatten a crease pattern into fixed slots.

    Nodes in id order fill (x, y) slots; edges in lexicographic order fill
    (id_1, id_2) slots divided by n_max; unused slots stay zero. The vector
    depends on node numbering, so isomorphic patterns with different ids differ.

    Raises:
        LayoutCapacityError: More nodes or edges than the layout holds
    """
    layout = layout or DescriptorLayout()
    if len(pattern.nodes) > layout.n_max:
        raise LayoutCapacityError(
            f"pattern has {len(pattern.nodes)} nodes, layout holds {layout.n_max}",
            nodes=len(pattern.nodes), n_max=layout.n_max)
    if len(pattern.edges) > layout.e_max:
        raise LayoutCapacityError(
            f"pattern has {len(pattern.edges)} edges, layout holds {layout.e_max}",
            edges=len(pattern.edges), e_max=layout.e_max)

    values = np.zeros(layout.length)
    for slot, node in enumerate(pattern.nodes):
        values[2 * slot] = node.x
        values[2 * slot + 1] = node.y
    base = 2 * layout.n_max
    for slot, edge in enumerate(pattern.edges):
        values[base + 2 * slot] = edge.a / layout.n_max
        values[base + 2 * slot + 1] = edge.b / layout.n_max
    return FeatureVector(values, layout.descriptor_id, layout.column_names())


@dataclass(frozen=True)
class PcaResult:
    """Fitted principal-component basis and the projected training data."""
    mean: np.ndarray = field(compare=False)
    components: np.ndarray = field(compare=False)
    explained_variance_ratio: np.ndarray = field(compare=False)
    projected: np.ndarray = field(compare=False)

    @property
    def dims(self) -> int:
        return self.components.shape[0]

    def transform(self, features: np.ndarray) -> np.ndarray:
        """Project new rows onto the fitted basis."""
        data = np.atleast_2d(np.asarray(features, dtype=float))
        if data.shape[1] != self.mean.shape[0]:
            raise DescriptorError(
                f"expected {self.mean.shape[0]} columns, got {data.shape[1]}")
        return (data - self.mean) @ self.components.T

    def inverse_transform(self, projected: np.ndarray) -> np.ndarray:
        return np.atleast_2d(projected) @ self.components + self.mean

    def column_names(self) -> Tuple[str, ...]:
        return tuple(f"pca_{k}" for k in range(self.dims))


def reduce_pca(features: np.ndarray, dims: int) -> PcaResult:
    """
    Mean-centred projection onto the top principal components.

    Each component's largest-magnitude loading is made positive.

    Raises:
        DescriptorError: dims outside 1..min(samples, columns)
    """
    data = np.atleast_2d(np.asarray(features, dtype=float))
    samples, columns = data.shape
    if not isinstance(dims, (int, np.integer)) or not 1 <= dims <= min(samples, columns):
        raise DescriptorError(f"PCA dims must lie in 1..{min(samples, columns)}, got {dims}")

    with np.errstate(divide='ignore', invalid='ignore'):
        fitted = PrincipalComponents(n_components=int(dims), svd_solver='full').fit(data)
    components = np.array(fitted.components_, dtype=float)
    signs = np.sign(components[np.arange(len(components)), np.argmax(np.abs(components), axis=1)])
    components *= np.where(signs == 0, 1.0, signs)[:, None]
    ratio = np.nan_to_num(np.asarray(fitted.explained_variance_ratio_, dtype=float))

    mean = np.array(fitted.mean_, dtype=float)
    logger.debug("PCA: %d -> %d dims, explained %.4f", columns, dims, float(ratio.sum()))
    return PcaResult(mean, components, ratio, (data - mean) @ components.T)


def combine(features: Sequence[FeatureVector]) -> FeatureVector:
    """Concatenate descriptor blocks in argument order."""
    if not features:
        raise DescriptorError("combine needs at least one feature vector")
    values = np.concatenate([f.values for f in features])
    names: List[str] = []
    for f in features:
        names.extend(f.column_names)
    return FeatureVector(values, COMBINED, tuple(names))
