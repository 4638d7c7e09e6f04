"""
Tests for landmark parsing, alignment, normalization and synthetic faces.
"""
import json

import numpy as np
import pytest

from libs.errors import InputError, LandmarkFormatError, SingularFitError
from libs.landmarks import (CANONICAL_MIRROR_PAIRS, EXPRESSION_CLASSES, LandmarkFrame, LandmarkPoint,
                            Region, Sequence, align_affine, canonical_layout,
                            generate_synthetic_face, mirror_frame, normalize_to_nose,
                            parse_landmark_sequence, select_peak_frame, serialize_sequence)


def small_doc(frames=2):
    def points():
        return [
            {'id': 30, 'region': 'nose', 'pos': [0.0, 0.0]},
            {'id': 36, 'region': 'eye_left', 'pos': [-1.0, 1.0]},
            {'id': 45, 'region': 'eye_right', 'pos': [1.0, 1.0]},
        ]
    return {'subject': 's1', 'label': 2, 'neutral_index': 0,
            'frames': [{'index': k, 'points': points()} for k in range(frames)]}


class TestParsing:
    """Landmark sequence JSON parsing."""

    def test_parse_valid(self):
        """Test a well-formed document parses with sorted ids."""
        doc = small_doc()
        doc['frames'][0]['points'].reverse()
        sequence = parse_landmark_sequence(json.dumps(doc))
        assert sequence.subject == 's1'
        assert sequence.label == 2
        assert len(sequence.frames) == 2
        assert sequence.frames[0].ids == (30, 36, 45)
        assert sequence.neutral.nose_id == 30

    def test_parse_bytes(self):
        """Test bytes input is accepted."""
        sequence = parse_landmark_sequence(json.dumps(small_doc()).encode('utf-8'))
        assert sequence.frames[1].frame_index == 1

    def test_malformed_json(self):
        """Test malformed JSON raises a format error."""
        with pytest.raises(LandmarkFormatError):
            parse_landmark_sequence('{"frames": [')

    def test_missing_nose(self):
        """Test a frame without a nose landmark is rejected with its index."""
        doc = small_doc()
        doc['frames'][1]['points'] = doc['frames'][1]['points'][1:]
        with pytest.raises(LandmarkFormatError) as info:
            parse_landmark_sequence(json.dumps(doc))
        assert info.value.frame_index == 1

    def test_duplicate_id(self):
        """Test duplicate ids report the landmark id."""
        doc = small_doc()
        doc['frames'][0]['points'].append({'id': 36, 'region': 'eye_left', 'pos': [0.5, 0.5]})
        with pytest.raises(LandmarkFormatError) as info:
            parse_landmark_sequence(json.dumps(doc))
        assert info.value.landmark_id == 36

    def test_unknown_region(self):
        """Test unknown regions are rejected."""
        doc = small_doc()
        doc['frames'][0]['points'][1]['region'] = 'ear'
        with pytest.raises(LandmarkFormatError):
            parse_landmark_sequence(json.dumps(doc))

    def test_non_finite_coordinate(self):
        """Test NaN coordinates are rejected."""
        text = json.dumps(small_doc()).replace('[1.0, 1.0]', '[NaN, 1.0]', 1)
        with pytest.raises(LandmarkFormatError):
            parse_landmark_sequence(text)

    def test_frames_with_different_ids(self):
        """Test frames must share one id set."""
        doc = small_doc()
        doc['frames'][1]['points'][2]['id'] = 46
        with pytest.raises(LandmarkFormatError):
            parse_landmark_sequence(json.dumps(doc))

    def test_mixed_dimensionality(self):
        """Test 2D and 3D points cannot share a frame."""
        doc = small_doc()
        doc['frames'][0]['points'][1]['pos'] = [-1.0, 1.0, 0.0]
        with pytest.raises(LandmarkFormatError):
            parse_landmark_sequence(json.dumps(doc))

    def test_serialize_inverts_parse(self):
        """Test serialization reproduces the parsed sequence."""
        sequence = generate_synthetic_face(1, 0.8, seed=3, frames=3)
        assert parse_landmark_sequence(serialize_sequence(sequence)) == sequence


class TestAlignment:
    """Affine alignment and nose normalization."""

    def test_recovers_known_affine(self, canonical_frame):
        """Test alignment inverts a known affine map."""
        matrix = np.array([[1.2, 0.3], [-0.1, 0.9]])
        moved = canonical_frame.with_positions(canonical_frame.positions @ matrix + [2.0, -1.0])
        result = align_affine(moved, canonical_frame)
        assert result.residual < 1e-9
        np.testing.assert_allclose(result.frame.positions, canonical_frame.positions, atol=1e-9)

    def test_collinear_template(self):
        """Test collinear landmarks cannot anchor a 2D fit."""
        points = tuple(LandmarkPoint(i, Region.NOSE if i == 0 else Region.MOUTH, (float(i), 2.0 * i))
                       for i in range(4))
        frame = LandmarkFrame(0, points)
        with pytest.raises(SingularFitError):
            align_affine(frame, frame)

    def test_mismatched_ids(self, canonical_frame):
        """Test alignment requires the same ids."""
        other = LandmarkFrame(0, canonical_frame.points[:-1])
        with pytest.raises(LandmarkFormatError):
            align_affine(other, canonical_frame)

    def test_normalize_puts_nose_at_origin(self, canonical_frame):
        """Test the reference nose lands on the origin."""
        shifted = canonical_frame.with_positions(canonical_frame.positions + [5.0, 7.0])
        normalized = normalize_to_nose(shifted)
        assert normalized.nose_id == 30
        np.testing.assert_array_equal(normalized.position_of(30), [0.0, 0.0])
        np.testing.assert_allclose(normalized.positions,
                                   normalize_to_nose(canonical_frame).positions, atol=1e-12)


class TestPeakSelection:
    """Peak frame choice."""

    def test_synthetic_peak_is_last(self):
        """Test the ramped synthetic sequence peaks at its last frame."""
        sequence = generate_synthetic_face(2, 1.0, seed=1, frames=6)
        assert select_peak_frame(sequence) == 5

    def test_ties_go_to_lowest_index(self, canonical_frame):
        """Test identical displacements pick the earliest frame."""
        frames = tuple(LandmarkFrame(k, canonical_frame.points) for k in range(4))
        assert select_peak_frame(Sequence(frames)) == 1

    def test_single_frame(self, canonical_frame):
        """Test a one-frame sequence has no peak."""
        with pytest.raises(LandmarkFormatError):
            select_peak_frame(Sequence((canonical_frame,)))


class TestCanonicalFace:
    """Canonical layout, mirroring and the synthetic generator."""

    def test_layout_shape(self):
        """Test the canonical layout has 37 landmarks in 2D and 3D."""
        assert len(canonical_layout(2).ids) == 37
        assert canonical_layout(3).dimensionality == 3
        with pytest.raises(InputError):
            canonical_layout(4)

    def test_mirror_is_symmetric(self, canonical_frame):
        """Test the canonical face is its own mirror image."""
        mirrored = mirror_frame(canonical_frame, CANONICAL_MIRROR_PAIRS)
        np.testing.assert_array_equal(mirrored.positions, canonical_frame.positions)

    def test_mirror_twice_is_identity(self):
        """Test mirroring an asymmetric face twice restores it."""
        frame = generate_synthetic_face(1, 1.0, seed=9).frames[-1]
        twice = mirror_frame(mirror_frame(frame, CANONICAL_MIRROR_PAIRS), CANONICAL_MIRROR_PAIRS)
        np.testing.assert_array_equal(twice.positions, frame.positions)

    def test_synthetic_deterministic(self):
        """Test identical arguments give identical sequences."""
        a = generate_synthetic_face(3, 0.7, seed=11)
        b = generate_synthetic_face(3, 0.7, seed=11)
        assert serialize_sequence(a) == serialize_sequence(b)
        assert serialize_sequence(a) != serialize_sequence(generate_synthetic_face(3, 0.7, seed=12))

    def test_zero_intensity_frames_identical(self):
        """Test intensity 0 produces a static sequence."""
        sequence = generate_synthetic_face(0, 0.0, seed=5, frames=4)
        for frame in sequence.frames[1:]:
            np.testing.assert_array_equal(frame.positions, sequence.frames[0].positions)

    def test_all_classes_and_3d(self):
        """Test every class generates in 3D with its label."""
        for class_id in range(len(EXPRESSION_CLASSES)):
            sequence = generate_synthetic_face(class_id, 0.9, seed=class_id, dims=3)
            assert sequence.label == class_id
            assert sequence.frames[0].dimensionality == 3

    def test_invalid_arguments(self):
        """Test out-of-range class, intensity and frame count."""
        with pytest.raises(InputError):
            generate_synthetic_face(4, 0.5, seed=0, class_count=4)
        with pytest.raises(InputError):
            generate_synthetic_face(0, 1.5, seed=0)
        with pytest.raises(InputError):
            generate_synthetic_face(0, 0.5, seed=0, frames=1)
