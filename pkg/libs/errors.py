"""
Error taxonomy for FoldMark.
Every library failure derives from FoldMarkError so the entry script can map it
to an exit code and a JSON error report.
"""

from typing import Any, Dict, List, Optional


class FoldMarkError(Exception):
    """Base class for all FoldMark errors."""

    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = {k: v for k, v in context.items() if v is not None}

    def to_report(self) -> Dict[str, Any]:
        """Build the JSON error report written to stderr by the CLI."""
        report: Dict[str, Any] = {
            'error': type(self).__name__,
            'message': self.message,
            'exit_code': self.exit_code,
        }
        if self.context:
            report['context'] = self.context
        return report


class ConfigError(FoldMarkError):
    """Configuration value out of range or unresolvable path."""


class InputError(FoldMarkError, ValueError):
    """Malformed user-supplied input (exit code 2)."""

    exit_code = 2


class LandmarkFormatError(InputError):
    """Landmark sequence file failed parsing or validation."""

    def __init__(self, message: str, frame_index: Optional[int] = None,
                 landmark_id: Optional[int] = None, path: Optional[str] = None):
        super().__init__(message, frame_index=frame_index,
                         landmark_id=landmark_id, path=path)
        self.frame_index = frame_index
        self.landmark_id = landmark_id


class TopologyError(InputError):
    """Topology file is malformed or does not describe a tree."""


class CreaseFormatError(InputError):
    """Crease pattern document violates the schema."""

    def __init__(self, message: str, json_path: str = '$'):
        super().__init__(f"{json_path}: {message}", json_path=json_path)
        self.json_path = json_path


class FeatureFileError(InputError):
    """Manifest or feature CSV is malformed."""


class SingularFitError(FoldMarkError):
    """Affine fit is undetermined (collinear or coplanar template)."""


class TreeError(FoldMarkError):
    """Shadow tree construction or query failure."""


class UnknownNodeError(TreeError, KeyError):
    """Node id is not part of the tree."""

    def __str__(self) -> str:
        return self.message


class PolygonError(FoldMarkError):
    """Lang polygon construction failure."""


class ShrinkError(FoldMarkError):
    """Shrinking engine failure."""


class MaxEventsExceeded(ShrinkError):
    """Event budget exhausted before every polygon terminated."""

    def __init__(self, message: str, events: Optional[List[Any]] = None):
        super().__init__(message)
        self.events = list(events or [])


class NumericalDegeneracyError(ShrinkError):
    """Wavefront lost convexity or inverted beyond tolerance."""

    def __init__(self, message: str, depth: float):
        super().__init__(f"{message} (inset depth {depth:.12g})", depth=depth)
        self.depth = depth


class OffsetInversionError(ShrinkError):
    """An offset step went past an edge collapse; the caller must refine."""


class StaleEventError(ShrinkError):
    """Event no longer holds for the polygon it is applied to."""


class DescriptorError(FoldMarkError):
    """Descriptor inputs are inconsistent."""


class LayoutCapacityError(DescriptorError):
    """Crease pattern does not fit the descriptor layout."""


class ClassifierError(FoldMarkError):
    """Dataset or model misuse."""


class ConvergenceError(ClassifierError):
    """Dual solver hit its iteration bound before reaching tolerance."""
