"""
Score formatting utilities for FoldMark.
Formats accuracies, F1 scores and counts with optional threshold colors.
"""

from typing import Optional, Union

from termcolor import colored

from .config_loader import get_config_loader


class ScoreFormatter:
    """Formats evaluation scores according to the display configuration."""

    def __init__(self):
        """Initialize the score formatter with configuration."""
        self.config_loader = get_config_loader()
        self.display_config = self.config_loader.get_display_config()

    def score_style(self, value: Union[float, int]) -> Optional[str]:
        """
        Color name for a score in [0, 1].

        Returns:
            'green' at or above good_score, 'red' below poor_score, else None
        """
        if value >= self.display_config['good_score']:
            return 'green'
        if value < self.display_config['poor_score']:
            return 'red'
        return None

    def format_score(
        self,
        value: Union[float, int],
        decimal_places: Optional[int] = None,
        colored_mode: Optional[bool] = None,
        rich_mode: bool = False,
        as_percentage: bool = False
    ) -> str:
        """
        Format a score in [0, 1].

        Args:
            value: The score
            decimal_places: Override decimal places (uses config if None)
            colored_mode: Override color mode (uses config if None)
            rich_mode: If True, returns plain text for Rich styling
            as_percentage: Show as a percentage instead of a fraction

        Returns:
            Formatted score string
        """
        decimal_places = decimal_places if decimal_places is not None else \
            self.display_config['decimal_places']
        colored_mode = colored_mode if colored_mode is not None else \
            self.display_config['colored_mode']

        if value != value:
            return "n/a"
        if as_percentage:
            text = f"{100.0 * value:.{max(decimal_places - 2, 0)}f}%"
        else:
            text = f"{value:.{decimal_places}f}"

        style = self.score_style(value)
        if colored_mode and not rich_mode and style:
            text = colored(text, style)
        return text

    def format_count(self, value: int, highlight: bool = False,
                     colored_mode: Optional[bool] = None, rich_mode: bool = False) -> str:
        """Format a confusion-matrix count; highlighted counts are the diagonal."""
        colored_mode = colored_mode if colored_mode is not None else \
            self.display_config['colored_mode']
        text = f"{int(value):,}"
        if highlight and colored_mode and not rich_mode and value > 0:
            text = colored(text, 'green', attrs=['bold'])
        return text


# Global score formatter instance
_score_formatter: Optional[ScoreFormatter] = None


def get_score_formatter() -> ScoreFormatter:
    """Get the global score formatter instance."""
    global _score_formatter
    if _score_formatter is None:
        _score_formatter = ScoreFormatter()
    return _score_formatter


def reset_score_formatter():
    """Drop the cached formatter so the next call re-reads configuration."""
    global _score_formatter
    _score_formatter = None


def format_score(value: Union[float, int], **kwargs) -> str:
    """Format a score using the global formatter."""
    return get_score_formatter().format_score(value, **kwargs)


def format_count(value: int, **kwargs) -> str:
    """Format a count using the global formatter."""
    return get_score_formatter().format_count(value, **kwargs)
