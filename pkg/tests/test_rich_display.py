"""
Tests for RichDisplay class - focused on essential functionality.
"""
import numpy as np
from rich import box
from rich.table import Table

from libs.classify import EvaluationReport
from libs.rich_display import RichDisplay


def make_report(name='dtnnp', accuracies=(1.0, 0.9)):
    return EvaluationReport(name, 2, 1.0, 0, ('brow_raise', 'smile'), tuple(accuracies),
                            (1.0, 0.85), np.array([[5, 0], [1, 4]]))


class TestRichDisplay:
    """Test cases for RichDisplay class."""

    def test_rich_display_init(self, global_config):
        """Test RichDisplay initialization."""
        display = RichDisplay()
        assert display.config_loader is not None
        assert display.score_formatter is not None

    def test_create_table_basic(self, global_config):
        """Test basic table creation."""
        display = RichDisplay()
        table = display.create_table(['Metric', 'ACC'], [['mean', 0.9], ['min', 0.8]])

        assert isinstance(table, Table)
        assert table.title is None
        assert table.show_header is True
        assert len(table.columns) == 2
        assert table.row_count == 2

    def test_create_table_with_title(self, global_config):
        """Test table creation with title."""
        table = RichDisplay().create_table(['Metric', 'ACC'], [['mean', 0.9]],
                                           title="k-fold evaluation")
        assert table.title == "k-fold evaluation"

    def test_create_table_bordered(self, global_config):
        """Test bordered tables use the configured heavy box."""
        display = RichDisplay()
        assert display.create_table(['A'], [['x']], bordered=True).box == box.HEAVY
        assert display.create_table(['A'], [['x']], bordered=False).box == box.MINIMAL

    def test_display_metrics_table(self, global_config, capsys):
        """Test the metrics table has one column per feature set."""
        display = RichDisplay()
        display.display_metrics_table([make_report('dtnnp'), make_report('combined')])
        out = capsys.readouterr().out
        assert 'dtnnp' in out
        assert 'combined' in out
        assert '0.950' in out

    def test_display_metrics_table_plain(self, global_config, capsys):
        """Test the columnar metrics table."""
        RichDisplay().display_metrics_table([make_report('dtnnp')], plain=True)
        out = capsys.readouterr().out
        assert 'dtnnp' in out.lower()
        assert '0.950' in out
        assert '0.925' in out

    def test_display_confusion_matrix(self, global_config, capsys):
        """Test the confusion matrix lists class names and counts."""
        RichDisplay().display_confusion_matrix(make_report(), plain=True)
        out = capsys.readouterr().out
        assert 'brow_raise' in out
        assert 'smile' in out
        assert '4' in out

    def test_display_crease_summary(self, global_config, capsys):
        """Test the crease summary table."""
        RichDisplay().display_crease_summary([['Leaves', 37], ['Splits', 0]])
        out = capsys.readouterr().out
        assert 'Leaves' in out
        assert '37' in out

    def test_columnar_empty_rows(self, global_config, capsys):
        """Test an empty columnar table prints a placeholder."""
        RichDisplay().display_columnar_table(['A', 'B'], [], title='Empty')
        out = capsys.readouterr().out
        assert 'Empty' in out
        assert '(no rows)' in out
