"""
Landmark data model for FoldMark.
Parsing and serialization of landmark sequences, affine alignment, nose
normalization, peak-frame selection and the synthetic face generator.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence as SeqType, Tuple, Union

import numpy as np

from .errors import InputError, LandmarkFormatError, SingularFitError

logger = logging.getLogger(__name__)


class Region(str, Enum):
    """Facial region a landmark belongs to."""
    EYEBROW_LEFT = 'eyebrow_left'
    EYEBROW_RIGHT = 'eyebrow_right'
    EYE_LEFT = 'eye_left'
    EYE_RIGHT = 'eye_right'
    NOSE = 'nose'
    MOUTH = 'mouth'


@dataclass(frozen=True)
class LandmarkPoint:
    """A single labeled landmark."""
    id: int
    region: Region
    position: Tuple[float, ...]


@dataclass(frozen=True)
class LandmarkFrame:
    """
    Labeled 2D/3D landmark positions for one video frame.

    Points are kept sorted by id. The reference landmark is the nose-region
    point with the lowest id.
    """
    frame_index: int
    points: Tuple[LandmarkPoint, ...]

    def __post_init__(self):
        points = tuple(sorted(self.points, key=lambda p: p.id))
        object.__setattr__(self, 'points', points)
        if not isinstance(self.frame_index, int) or self.frame_index < 0:
            raise LandmarkFormatError(
                f"frame index must be a non-negative integer, got {self.frame_index!r}")
        if not points:
            raise LandmarkFormatError("frame has no landmarks",
                                      frame_index=self.frame_index)

        dims = len(points[0].position)
        seen = set()
        for point in points:
            if point.id in seen:
                raise LandmarkFormatError(f"duplicate landmark id {point.id}",
                                          frame_index=self.frame_index, landmark_id=point.id)
            seen.add(point.id)
            if len(point.position) not in (2, 3) or len(point.position) != dims:
                raise LandmarkFormatError(
                    f"landmark {point.id} has {len(point.position)} coordinates, expected {dims}",
                    frame_index=self.frame_index, landmark_id=point.id)
            if not all(math.isfinite(c) for c in point.position):
                raise LandmarkFormatError(f"non-finite coordinate in landmark {point.id}",
                                          frame_index=self.frame_index, landmark_id=point.id)

        if not any(p.region == Region.NOSE for p in points):
            raise LandmarkFormatError("missing nose landmark", frame_index=self.frame_index)

    @property
    def dimensionality(self) -> int:
        return len(self.points[0].position)

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(p.id for p in self.points)

    @property
    def regions(self) -> Dict[int, Region]:
        return {p.id: p.region for p in self.points}

    @property
    def nose_id(self) -> int:
        return min(p.id for p in self.points if p.region == Region.NOSE)

    @property
    def positions(self) -> np.ndarray:
        """Positions as an (n, d) array in id order."""
        return np.array([p.position for p in self.points], dtype=float)

    def position_of(self, landmark_id: int) -> np.ndarray:
        for point in self.points:
            if point.id == landmark_id:
                return np.array(point.position, dtype=float)
        raise KeyError(landmark_id)

    def with_positions(self, positions: np.ndarray) -> 'LandmarkFrame':
        """Return a frame of the same type with replaced positions (id order)."""
        positions = np.asarray(positions, dtype=float)
        points = tuple(
            LandmarkPoint(p.id, p.region, tuple(float(c) for c in row))
            for p, row in zip(self.points, positions))
        return LandmarkFrame(self.frame_index, points)

    def same_layout(self, other: 'LandmarkFrame') -> bool:
        """True when both frames share ids, regions and dimensionality."""
        return (self.ids == other.ids and self.regions == other.regions
                and self.dimensionality == other.dimensionality)


@dataclass(frozen=True)
class NormalizedFrame(LandmarkFrame):
    """Landmark frame with nose-relative positions."""

    def __post_init__(self):
        super().__post_init__()
        nose = self.position_of(self.nose_id)
        if np.any(nose != 0.0):
            raise LandmarkFormatError("normalized frame must have the nose at the origin",
                                      frame_index=self.frame_index, landmark_id=self.nose_id)

    def with_positions(self, positions: np.ndarray) -> 'NormalizedFrame':
        frame = super().with_positions(positions)
        return NormalizedFrame(frame.frame_index, frame.points)


@dataclass(frozen=True)
class Sequence:
    """Ordered frames of one subject's expression, neutral frame first by default."""
    frames: Tuple[LandmarkFrame, ...]
    subject: str = ''
    label: int = 0
    neutral_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'frames', tuple(self.frames))
        if not self.frames:
            raise LandmarkFormatError("sequence has no frames")
        if not 0 <= self.neutral_index < len(self.frames):
            raise LandmarkFormatError(
                f"neutral_index {self.neutral_index} out of range for {len(self.frames)} frames")
        reference = self.frames[0]
        for frame in self.frames[1:]:
            if frame.ids != reference.ids:
                extra = sorted(set(frame.ids) ^ set(reference.ids))
                raise LandmarkFormatError(
                    f"frame {frame.frame_index} id set differs from frame {reference.frame_index}",
                    frame_index=frame.frame_index, landmark_id=extra[0] if extra else None)
            if frame.regions != reference.regions:
                bad = next(i for i in frame.ids if frame.regions[i] != reference.regions[i])
                raise LandmarkFormatError(
                    f"frame {frame.frame_index} relabels landmark {bad}",
                    frame_index=frame.frame_index, landmark_id=bad)
            if frame.dimensionality != reference.dimensionality:
                raise LandmarkFormatError(
                    f"frame {frame.frame_index} is {frame.dimensionality}D, "
                    f"frame {reference.frame_index} is {reference.dimensionality}D",
                    frame_index=frame.frame_index)

    @property
    def neutral(self) -> LandmarkFrame:
        return self.frames[self.neutral_index]


@dataclass(frozen=True)
class AlignmentResult:
    """Affinely aligned frame with the fitted map and its RMS residual."""
    frame: LandmarkFrame
    matrix: np.ndarray = field(repr=False)
    translation: np.ndarray = field(repr=False)
    residual: float = 0.0


def _parse_point(raw: Any, frame_index: int) -> LandmarkPoint:
    if not isinstance(raw, dict):
        raise LandmarkFormatError("point must be an object", frame_index=frame_index)
    landmark_id = raw.get('id')
    if not isinstance(landmark_id, int) or isinstance(landmark_id, bool):
        raise LandmarkFormatError(f"point id must be an integer, got {landmark_id!r}",
                                  frame_index=frame_index)
    try:
        region = Region(raw.get('region'))
    except ValueError:
        raise LandmarkFormatError(f"unknown region {raw.get('region')!r}",
                                  frame_index=frame_index, landmark_id=landmark_id)
    pos = raw.get('pos')
    if (not isinstance(pos, list) or len(pos) not in (2, 3)
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in pos)):
        raise LandmarkFormatError("pos must be a list of 2 or 3 numbers",
                                  frame_index=frame_index, landmark_id=landmark_id)
    if not all(math.isfinite(c) for c in pos):
        raise LandmarkFormatError(f"non-finite coordinate in landmark {landmark_id}",
                                  frame_index=frame_index, landmark_id=landmark_id)
    return LandmarkPoint(landmark_id, region, tuple(float(c) for c in pos))


def parse_landmark_sequence(data: Union[bytes, str]) -> Sequence:
    """
    Parse a JSON landmark sequence.

    Args:
        data: Serialized document (bytes or text)

    Returns:
        Validated Sequence with ids sorted within each frame

    Raises:
        LandmarkFormatError: Syntax or validation failure, with frame index and landmark id
    """
    if isinstance(data, bytes):
        data = data.decode('utf-8')
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise LandmarkFormatError(f"malformed JSON: {e}")
    if not isinstance(doc, dict):
        raise LandmarkFormatError("top-level value must be an object")

    raw_frames = doc.get('frames')
    if not isinstance(raw_frames, list) or not raw_frames:
        raise LandmarkFormatError("'frames' must be a non-empty list")

    frames: List[LandmarkFrame] = []
    for position, raw_frame in enumerate(raw_frames):
        if not isinstance(raw_frame, dict):
            raise LandmarkFormatError("frame must be an object", frame_index=position)
        frame_index = raw_frame.get('index', position)
        if not isinstance(frame_index, int) or isinstance(frame_index, bool):
            raise LandmarkFormatError(f"frame index must be an integer, got {frame_index!r}",
                                      frame_index=position)
        raw_points = raw_frame.get('points')
        if not isinstance(raw_points, list):
            raise LandmarkFormatError("'points' must be a list", frame_index=frame_index)
        points = tuple(_parse_point(p, frame_index) for p in raw_points)
        frames.append(LandmarkFrame(frame_index, points))

    subject = doc.get('subject', '')
    label = doc.get('label', 0)
    neutral_index = doc.get('neutral_index', 0)
    if not isinstance(subject, str):
        raise LandmarkFormatError("'subject' must be a string")
    if not isinstance(label, int) or isinstance(label, bool):
        raise LandmarkFormatError("'label' must be an integer")
    if not isinstance(neutral_index, int) or isinstance(neutral_index, bool):
        raise LandmarkFormatError("'neutral_index' must be an integer")

    return Sequence(tuple(frames), subject, label, neutral_index)


def serialize_sequence(sequence: Sequence) -> str:
    """Serialize a Sequence as canonical JSON (sorted keys, ids ascending)."""
    doc = {
        'subject': sequence.subject,
        'label': sequence.label,
        'neutral_index': sequence.neutral_index,
        'frames': [
            {
                'index': frame.frame_index,
                'points': [
                    {'id': p.id, 'region': p.region.value, 'pos': list(p.position)}
                    for p in frame.points
                ]
            }
            for frame in sequence.frames
        ]
    }
    return json.dumps(doc, indent=2, sort_keys=True) + '\n'


def align_affine(frame: LandmarkFrame, template: LandmarkFrame) -> AlignmentResult:
    """
    Fit the least-squares affine map taking frame onto template.

    Args:
        frame: Frame to transform
        template: Target positions (same ids and dimensionality)

    Returns:
        AlignmentResult with the transformed frame and RMS residual

    Raises:
        LandmarkFormatError: Id sets or dimensionality differ
        SingularFitError: Template or frame is collinear (2D) / coplanar (3D)
    """
    if frame.ids != template.ids or frame.dimensionality != template.dimensionality:
        raise LandmarkFormatError("frame and template must share ids and dimensionality",
                                  frame_index=frame.frame_index)
    dims = frame.dimensionality
    source = frame.positions
    target = template.positions
    if source.shape[0] < dims + 1:
        raise SingularFitError(f"need at least {dims + 1} landmarks for a {dims}D affine fit")

    source_mean = source.mean(axis=0)
    target_mean = target.mean(axis=0)
    source_c = source - source_mean
    target_c = target - target_mean
    try:
        for name, centered in (('template', target_c), ('frame', source_c)):
            scale = max(float(np.abs(centered).max()), 1.0)
            if np.linalg.matrix_rank(centered, tol=1e-10 * scale) < dims:
                shape = 'collinear' if dims == 2 else 'coplanar'
                raise SingularFitError(f"degenerate {name}: landmarks are {shape}")

        # Centering separates the translation from the linear part of the OLS fit
        matrix, _, _, _ = np.linalg.lstsq(source_c, target_c, rcond=None)
    except np.linalg.LinAlgError as e:
        raise SingularFitError(f"affine fit of frame {frame.frame_index} failed: {e}",
                               frame_index=frame.frame_index)
    aligned = source_c @ matrix + target_mean
    translation = target_mean - source_mean @ matrix
    residual = float(np.sqrt(np.mean(np.sum((aligned - target) ** 2, axis=1))))
    logger.debug("frame %d aligned, residual %.3g", frame.frame_index, residual)
    return AlignmentResult(frame.with_positions(aligned), matrix, translation, residual)


def normalize_to_nose(frame: LandmarkFrame) -> NormalizedFrame:
    """Subtract the reference nose position from every landmark."""
    positions = frame.positions
    nose_row = frame.ids.index(frame.nose_id)
    relative = positions - positions[nose_row]
    relative[nose_row] = 0.0
    shifted = frame.with_positions(relative)
    return NormalizedFrame(shifted.frame_index, shifted.points)


def frame_displacement(frame: LandmarkFrame, reference: LandmarkFrame) -> float:
    """Sum of per-landmark Euclidean distances between nose-normalized frames."""
    a = normalize_to_nose(frame).positions
    b = normalize_to_nose(reference).positions
    return float(np.sum(np.linalg.norm(a - b, axis=1)))


def select_peak_frame(sequence: Sequence) -> int:
    """
    Pick the frame whose landmarks deviate most from the neutral frame.

    Returns:
        Index into sequence.frames; ties go to the lowest index

    Raises:
        LandmarkFormatError: Sequence has a single frame
    """
    if len(sequence.frames) < 2:
        raise LandmarkFormatError("peak selection needs at least two frames")
    neutral = normalize_to_nose(sequence.neutral).positions

    best_index, best_value = -1, -math.inf
    for index, frame in enumerate(sequence.frames):
        if index == sequence.neutral_index:
            continue
        value = float(np.sum(np.linalg.norm(
            normalize_to_nose(frame).positions - neutral, axis=1)))
        if value > best_value:
            best_index, best_value = index, value
    return best_index


def mirror_frame(frame: LandmarkFrame, pairs: Mapping[int, int]) -> LandmarkFrame:
    """
    Reflect a frame about x = 0 and swap left/right landmark labels.

    Args:
        frame: Frame to mirror
        pairs: Landmark id -> mirrored landmark id (self-mapped ids allowed)
    """
    positions = {p.id: np.array(p.position, dtype=float) for p in frame.points}
    rows = []
    for point in frame.points:
        partner = positions[pairs.get(point.id, point.id)].copy()
        partner[0] = -partner[0]
        rows.append(partner)
    return frame.with_positions(np.array(rows))


# Canonical 37-landmark neutral face (68-point numbering, y grows upward)
_CANONICAL_2D: Dict[int, Tuple[Region, float, float]] = {
    17: (Region.EYEBROW_LEFT, -0.85, 0.80), 18: (Region.EYEBROW_LEFT, -0.68, 0.92),
    19: (Region.EYEBROW_LEFT, -0.50, 0.96), 20: (Region.EYEBROW_LEFT, -0.33, 0.94),
    21: (Region.EYEBROW_LEFT, -0.17, 0.88),
    22: (Region.EYEBROW_RIGHT, 0.17, 0.88), 23: (Region.EYEBROW_RIGHT, 0.33, 0.94),
    24: (Region.EYEBROW_RIGHT, 0.50, 0.96), 25: (Region.EYEBROW_RIGHT, 0.68, 0.92),
    26: (Region.EYEBROW_RIGHT, 0.85, 0.80),
    30: (Region.NOSE, 0.0, 0.12), 31: (Region.NOSE, -0.20, 0.0),
    32: (Region.NOSE, -0.10, -0.03), 34: (Region.NOSE, 0.10, -0.03),
    35: (Region.NOSE, 0.20, 0.0),
    36: (Region.EYE_LEFT, -0.72, 0.60), 37: (Region.EYE_LEFT, -0.60, 0.68),
    38: (Region.EYE_LEFT, -0.42, 0.68), 39: (Region.EYE_LEFT, -0.30, 0.60),
    40: (Region.EYE_LEFT, -0.42, 0.53), 41: (Region.EYE_LEFT, -0.60, 0.53),
    42: (Region.EYE_RIGHT, 0.30, 0.60), 43: (Region.EYE_RIGHT, 0.42, 0.68),
    44: (Region.EYE_RIGHT, 0.60, 0.68), 45: (Region.EYE_RIGHT, 0.72, 0.60),
    46: (Region.EYE_RIGHT, 0.60, 0.53), 47: (Region.EYE_RIGHT, 0.42, 0.53),
    48: (Region.MOUTH, -0.40, -0.45), 49: (Region.MOUTH, -0.26, -0.36),
    50: (Region.MOUTH, -0.12, -0.32), 51: (Region.MOUTH, 0.0, -0.34),
    52: (Region.MOUTH, 0.12, -0.32), 53: (Region.MOUTH, 0.26, -0.36),
    54: (Region.MOUTH, 0.40, -0.45), 56: (Region.MOUTH, 0.22, -0.58),
    57: (Region.MOUTH, 0.0, -0.62), 58: (Region.MOUTH, -0.22, -0.58),
}

_CANONICAL_DEPTH: Dict[Region, float] = {
    Region.EYEBROW_LEFT: 0.10, Region.EYEBROW_RIGHT: 0.10,
    Region.EYE_LEFT: 0.05, Region.EYE_RIGHT: 0.05,
    Region.NOSE: 0.20, Region.MOUTH: 0.12,
}

CANONICAL_MIRROR_PAIRS: Dict[int, int] = {}
for _a, _b in ((17, 26), (18, 25), (19, 24), (20, 23), (21, 22),
               (36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46),
               (31, 35), (32, 34), (48, 54), (49, 53), (50, 52), (58, 56)):
    CANONICAL_MIRROR_PAIRS[_a] = _b
    CANONICAL_MIRROR_PAIRS[_b] = _a


def canonical_layout(dims: int = 2) -> LandmarkFrame:
    """Return the canonical 37-landmark neutral face as frame 0."""
    if dims not in (2, 3):
        raise InputError(f"dimensionality must be 2 or 3, got {dims}")
    points = []
    for landmark_id, (region, x, y) in _CANONICAL_2D.items():
        if dims == 2:
            position: Tuple[float, ...] = (x, y)
        else:
            depth = _CANONICAL_DEPTH[region]
            if landmark_id == 30:
                depth = 0.35
            position = (x, y, depth)
        points.append(LandmarkPoint(landmark_id, region, position))
    return LandmarkFrame(0, tuple(points))


EXPRESSION_CLASSES: Tuple[str, ...] = (
    'brow_raise', 'smile', 'surprise', 'frown', 'disgust', 'fear')

# Unit-intensity displacement (dx, dy) per landmark for each expression class
_DEFORMATIONS: Tuple[Dict[int, Tuple[float, float]], ...] = (
    {   # brow_raise
        **{i: (0.0, 0.12) for i in range(17, 27)},
        37: (0.0, 0.04), 38: (0.0, 0.04), 43: (0.0, 0.04), 44: (0.0, 0.04),
    },
    {   # smile
        48: (-0.10, 0.08), 54: (0.10, 0.08), 49: (-0.03, 0.03), 53: (0.03, 0.03),
        58: (-0.02, 0.03), 56: (0.02, 0.03),
        40: (0.0, 0.02), 41: (0.0, 0.02), 46: (0.0, 0.02), 47: (0.0, 0.02),
    },
    {   # surprise
        56: (0.0, -0.16), 57: (0.0, -0.18), 58: (0.0, -0.16),
        48: (0.04, -0.06), 54: (-0.04, -0.06),
        37: (0.0, 0.05), 38: (0.0, 0.05), 43: (0.0, 0.05), 44: (0.0, 0.05),
        **{i: (0.0, 0.06) for i in range(17, 27)},
    },
    {   # frown
        20: (0.04, -0.08), 21: (0.05, -0.09), 22: (-0.05, -0.09), 23: (-0.04, -0.08),
        17: (0.0, -0.03), 26: (0.0, -0.03),
        48: (0.0, -0.07), 54: (0.0, -0.07), 49: (0.0, -0.02), 53: (0.0, -0.02),
    },
    {   # disgust
        31: (0.0, 0.06), 32: (0.0, 0.05), 34: (0.0, 0.05), 35: (0.0, 0.06),
        49: (0.0, 0.06), 50: (0.0, 0.07), 51: (0.0, 0.07), 52: (0.0, 0.07), 53: (0.0, 0.06),
        21: (0.02, -0.04), 22: (-0.02, -0.04),
    },
    {   # fear
        20: (0.03, 0.08), 21: (0.04, 0.09), 22: (-0.04, 0.09), 23: (-0.03, 0.08),
        48: (-0.08, -0.02), 54: (0.08, -0.02),
        37: (0.0, 0.04), 38: (0.0, 0.04), 43: (0.0, 0.04), 44: (0.0, 0.04),
    },
)


def generate_synthetic_face(class_id: int, intensity: float, seed: int, frames: int = 8,
                            dims: int = 2, class_count: Optional[int] = None,
                            subject: Optional[str] = None) -> Sequence:
    """
    Generate a deterministic neutral-to-peak expression sequence.

    Each class moves its own region set; a seeded subject shape, placement,
    amplitude and expression noise make samples of a class differ.

    Args:
        class_id: Expression class index
        intensity: Deformation strength in [0, 1]; 0 yields identical frames
        seed: RNG seed; identical arguments give bit-identical output
        frames: Frame count (>= 2), neutral first, peak last
        dims: 2 or 3
        class_count: Number of classes allowed (defaults to all known)
        subject: Subject id override

    Returns:
        Sequence labeled with class_id

    Raises:
        InputError: Unknown class id or invalid intensity/frame count
    """
    limit = len(EXPRESSION_CLASSES) if class_count is None else min(class_count, len(EXPRESSION_CLASSES))
    if not isinstance(class_id, (int, np.integer)) or not 0 <= class_id < limit:
        raise InputError(f"unknown expression class {class_id} (expected 0..{limit - 1})")
    if not 0.0 <= intensity <= 1.0:
        raise InputError(f"intensity must lie in [0, 1], got {intensity}")
    if frames < 2:
        raise InputError("a synthetic sequence needs at least two frames")

    rng = np.random.default_rng(seed)
    base = canonical_layout(dims)
    ids = base.ids
    neutral = base.positions

    subject_shape = rng.normal(0.0, 0.015, size=neutral.shape)
    scale = rng.uniform(0.9, 1.1)
    offset = rng.uniform(-0.5, 0.5, size=dims)
    amplitude = rng.uniform(0.8, 1.2)
    expression_noise = rng.normal(0.0, 0.01, size=neutral.shape)

    deformation = np.zeros_like(neutral)
    for row, landmark_id in enumerate(ids):
        dx, dy = _DEFORMATIONS[int(class_id)].get(landmark_id, (0.0, 0.0))
        deformation[row, 0] = dx
        deformation[row, 1] = dy
    peak_offset = intensity * (amplitude * deformation + expression_noise)

    generated = []
    for k in range(frames):
        ramp = k / (frames - 1)
        positions = (neutral + subject_shape + ramp * peak_offset) * scale + offset
        frame = base.with_positions(positions)
        generated.append(LandmarkFrame(k, frame.points))

    name = subject if subject is not None else f"synthetic-c{int(class_id)}-s{seed}"
    return Sequence(tuple(generated), name, int(class_id), 0)
