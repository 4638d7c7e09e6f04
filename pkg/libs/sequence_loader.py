"""
File persistence for FoldMark.
Loads landmark sequences and manifests, and reads/writes feature CSV files.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence as SeqType, Tuple, Union

import numpy as np
import pandas as pd

from .classify import Dataset
from .errors import FeatureFileError, InputError, LandmarkFormatError
from .landmarks import Sequence, parse_landmark_sequence, serialize_sequence

logger = logging.getLogger(__name__)

DESCRIPTOR_PREFIX = '# descriptor: '
MANIFEST_COLUMNS = ['path', 'label']
FLOAT_FORMAT = '%.12g'


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row; path is resolved against the manifest's directory."""
    row: int
    path: Path
    label: int


@dataclass(frozen=True)
class FeatureTable:
    """Feature CSV contents."""
    descriptor_id: str
    sequences: Tuple[str, ...]
    labels: np.ndarray = field(compare=False)
    matrix: np.ndarray = field(compare=False)
    columns: Tuple[str, ...] = ()

    def to_dataset(self) -> Dataset:
        return Dataset(self.matrix, self.labels)


class SequenceLoader:
    """Loads sequences and manifests, reporting failures with file and row context."""

    def __init__(self, root: Optional[Union[str, Path]] = None):
        """
        Initialize the loader.

        Args:
            root: Directory relative manifest paths are resolved against
                (defaults to each manifest's own directory)
        """
        self.root = Path(root) if root is not None else None

    def load_sequence(self, path: Union[str, Path]) -> Sequence:
        """
        Load one landmark-sequence JSON file.

        Raises:
            LandmarkFormatError: Unreadable or invalid file (path attached)
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise LandmarkFormatError(f"cannot read {path}: {e.strerror}", path=str(path))
        try:
            return parse_landmark_sequence(data)
        except LandmarkFormatError as e:
            e.context.setdefault('path', str(path))
            raise

    def load_manifest(self, path: Union[str, Path]) -> List[ManifestEntry]:
        """
        Read a manifest CSV with columns path,label.

        Raises:
            InputError: Missing file, missing columns or a bad row
        """
        path = Path(path)
        if not path.exists():
            raise InputError(f"manifest not found: {path}", path=str(path))
        try:
            frame = pd.read_csv(path, dtype={'path': str})
        except pd.errors.EmptyDataError:
            raise InputError(f"manifest is empty: {path}", path=str(path))
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            raise InputError(f"malformed manifest {path}: {e}", path=str(path))
        missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
        if missing:
            raise InputError(f"manifest {path} lacks columns {missing}", path=str(path))

        base = self.root if self.root is not None else path.parent
        entries = []
        for row, (entry_path, label) in enumerate(zip(frame['path'], frame['label'])):
            if not isinstance(entry_path, str) or not entry_path.strip():
                raise InputError(f"manifest row {row} has no path", path=str(path), row=row)
            try:
                label_value = int(label)
            except (TypeError, ValueError):
                raise InputError(f"manifest row {row} has a non-integer label {label!r}",
                                 path=str(path), row=row)
            if label_value != label:
                raise InputError(f"manifest row {row} has a non-integer label {label!r}",
                                 path=str(path), row=row)
            resolved = Path(entry_path)
            if not resolved.is_absolute():
                resolved = base / resolved
            entries.append(ManifestEntry(row, resolved, label_value))
        return entries


def write_sequence(sequence: Sequence, path: Union[str, Path]):
    Path(path).write_text(serialize_sequence(sequence), encoding='utf-8')


def write_manifest(entries: SeqType[Tuple[str, int]], path: Union[str, Path]):
    """Write (relative path, label) rows."""
    frame = pd.DataFrame(list(entries), columns=MANIFEST_COLUMNS)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        frame.to_csv(f, index=False, lineterminator='\n')


def write_feature_csv(path: Union[str, Path], descriptor_id: str, sequences: SeqType[str],
                      labels: SeqType[int], matrix: np.ndarray, columns: SeqType[str]):
    """
    Write a feature CSV: a '# descriptor: <id>' line, then a header and one row per sequence.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float)) if len(sequences) else \
        np.zeros((0, len(columns)))
    frame = pd.DataFrame(matrix, columns=list(columns))
    frame.insert(0, 'label', [int(label) for label in labels])
    frame.insert(0, 'sequence', list(sequences))
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(f"{DESCRIPTOR_PREFIX}{descriptor_id}\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.debug("wrote %d feature rows (%s) to %s", len(frame), descriptor_id, path)


def read_feature_csv(path: Union[str, Path]) -> FeatureTable:
    """
    Read a feature CSV written by write_feature_csv.

    Raises:
        FeatureFileError: Missing metadata line, missing columns or non-numeric features
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            first = f.readline()
    except OSError as e:
        raise FeatureFileError(f"cannot read {path}: {e.strerror}", path=str(path))
    if not first.startswith(DESCRIPTOR_PREFIX):
        raise FeatureFileError(f"{path} lacks the '{DESCRIPTOR_PREFIX.strip()}' line",
                               path=str(path), row=0)
    descriptor_id = first[len(DESCRIPTOR_PREFIX):].strip()

    try:
        frame = pd.read_csv(path, skiprows=1, dtype={'sequence': str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FeatureFileError(f"malformed feature file {path}: {e}", path=str(path))
    for column in ('sequence', 'label'):
        if column not in frame.columns:
            raise FeatureFileError(f"{path} lacks the '{column}' column", path=str(path))

    feature_columns = [c for c in frame.columns if c not in ('sequence', 'label')]
    values = frame[feature_columns].apply(pd.to_numeric, errors='coerce')
    bad = values.isna().any(axis=1) | pd.to_numeric(frame['label'], errors='coerce').isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise FeatureFileError(f"{path}: non-numeric value in data row {row}",
                               path=str(path), row=row)

    return FeatureTable(descriptor_id, tuple(frame['sequence'].astype(str)),
                        frame['label'].astype(int).to_numpy(),
                        values.to_numpy(dtype=float), tuple(feature_columns))


# Global sequence loader instance
_sequence_loader: Optional[SequenceLoader] = None


def get_sequence_loader() -> SequenceLoader:
    """Get the global sequence loader instance."""
    global _sequence_loader
    if _sequence_loader is None:
        _sequence_loader = SequenceLoader()
    return _sequence_loader


def load_sequence(path: Union[str, Path]) -> Sequence:
    """Load a sequence using the global loader."""
    return get_sequence_loader().load_sequence(path)


def load_manifest(path: Union[str, Path]) -> List[ManifestEntry]:
    """Load a manifest using the global loader."""
    return get_sequence_loader().load_manifest(path)
