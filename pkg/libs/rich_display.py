"""
Rich table display utilities for FoldMark.
Provides bordered Rich tables and a plain columnar mode for metrics,
confusion matrices and crease-pattern summaries.
"""

from typing import Any, List, Optional, Sequence

import numpy as np
from columnar import columnar
from rich import box
from rich.console import Console
from rich.table import Table
from rich.text import Text
from termcolor import colored

from .classify import EvaluationReport
from .config_loader import get_config_loader
from .score_formatter import get_score_formatter

SCORE_HEADERS = ('ACC', 'F1', 'SCORE')


class RichDisplay:
    """Handles Rich-based table display with configuration support."""

    def __init__(self, console: Optional[Console] = None):
        """Initialize the Rich display with configuration."""
        self.config_loader = get_config_loader()
        self.table_config = self.config_loader.get_table_config()
        self.display_config = self.config_loader.get_display_config()
        self.score_formatter = get_score_formatter()
        self.console = console or Console()

    def _is_score_column(self, header: str) -> bool:
        return any(tag in header.upper() for tag in SCORE_HEADERS)

    def create_table(
        self,
        headers: List[str],
        data: List[List[Any]],
        bordered: bool = False,
        title: Optional[str] = None,
        score_rows: Optional[Sequence[int]] = None
    ) -> Table:
        """
        Create a Rich table with the specified configuration.

        Args:
            headers: List of column headers
            data: List of rows, each row is a list of values
            bordered: Whether to show borders
            title: Optional table title
            score_rows: Rows whose float cells are scores in [0, 1]; by default a
                float is a score when its column header names one

        Returns:
            Rich Table object
        """
        table = Table(title=title, show_header=True,
                      header_style=self.table_config['header_style'],
                      expand=bool(self.display_config['stretch_to_terminal']))

        if bordered:
            border_style = self.table_config['bordered_style']
            if border_style == "heavy":
                table.box = box.HEAVY
            elif border_style == "double":
                table.box = box.DOUBLE
            else:
                table.box = box.ROUNDED
        else:
            table.box = box.MINIMAL

        for i, header in enumerate(headers):
            numeric = bool(data) and all(
                isinstance(row[i], (int, float, np.number)) for row in data if i < len(row))
            justify = self.table_config['number_alignment'] if numeric and i > 0 else "left"
            if i == 0:
                header_text = Text(header, style="bold bright_cyan")
            elif self._is_score_column(header):
                header_text = Text(header, style="bold bright_green")
            else:
                header_text = Text(header, style="bold white")
            table.add_column(header_text, justify=justify)

        for r, row in enumerate(data):
            formatted_row = []
            for i, cell in enumerate(row):
                header = headers[i] if i < len(headers) else ""
                is_score = (r in score_rows) if score_rows is not None else \
                    self._is_score_column(header)
                formatted_row.append(self._rich_cell(cell, i, is_score))
            table.add_row(*formatted_row)

        return table

    def _rich_cell(self, cell: Any, column: int, is_score: bool) -> Text:
        if isinstance(cell, (float, np.floating)) and is_score:
            text = self.score_formatter.format_score(float(cell), rich_mode=True)
            style = self.score_formatter.score_style(float(cell))
            if self.display_config['colored_mode'] and style:
                return Text(text, style=style)
            return Text(text)
        if isinstance(cell, (float, np.floating)):
            return Text(f"{float(cell):.{self.display_config['decimal_places']}f}")
        if isinstance(cell, (int, np.integer)):
            return Text(f"{int(cell):,}")
        cell_str = str(cell) if cell is not None else ""
        return Text(cell_str, style="bright_cyan" if column == 0 else "white")

    def _plain_cell(self, cell: Any, is_score: bool) -> str:
        if isinstance(cell, (float, np.floating)) and is_score:
            return self.score_formatter.format_score(float(cell))
        if isinstance(cell, (float, np.floating)):
            return f"{float(cell):.{self.display_config['decimal_places']}f}"
        if isinstance(cell, (int, np.integer)):
            return f"{int(cell):,}"
        return str(cell) if cell is not None else ""

    def _width(self, width: Optional[int]) -> int:
        if width:
            return width
        if self.display_config['stretch_to_terminal']:
            return self.console.width
        return int(self.display_config['terminal_width'])

    def display_columnar_table(
        self,
        headers: List[str],
        data: List[List[Any]],
        title: Optional[str] = None,
        width: Optional[int] = None,
        score_rows: Optional[Sequence[int]] = None
    ):
        """
        Display a table using columnar (non-Rich) with termcolor formatting.

        Args:
            headers: List of column headers
            data: List of rows
            title: Optional table title
            width: Terminal width override
            score_rows: As for create_table
        """
        formatted_data = []
        for r, row in enumerate(data):
            formatted_row = []
            for i, cell in enumerate(row):
                header = headers[i] if i < len(headers) else ""
                is_score = (r in score_rows) if score_rows is not None else \
                    self._is_score_column(header)
                formatted_row.append(self._plain_cell(cell, is_score))
            formatted_data.append(formatted_row)

        if title:
            print(title)
        if not formatted_data:
            print('  (no rows)')
            return

        table = columnar(
            formatted_data,
            headers=headers,
            no_borders=True,
            terminal_width=self._width(width),
            wrap_max=1
        )
        print('\n'.join(line.rstrip() for line in table.split('\n')))

    def display_table(
        self,
        headers: List[str],
        data: List[List[Any]],
        bordered: bool = True,
        title: Optional[str] = None,
        width: Optional[int] = None,
        plain: bool = False,
        score_rows: Optional[Sequence[int]] = None
    ):
        """
        Display a table using Rich, or columnar when plain is set.

        Args:
            headers: List of column headers
            data: List of rows
            bordered: Whether to show borders
            title: Optional table title
            width: Terminal width override
            plain: Use the columnar renderer
            score_rows: As for create_table
        """
        if plain:
            self.display_columnar_table(headers, data, title, width, score_rows)
            return
        table = self.create_table(headers, data, bordered, title, score_rows)
        if width or not self.display_config['stretch_to_terminal']:
            Console(width=self._width(width), file=self.console.file).print(table)
        else:
            self.console.print(table)

    def display_metrics_table(self, reports: Sequence[EvaluationReport], plain: bool = False):
        """One column per feature set: mean accuracy, mean macro-F1, folds, C."""
        headers = ['Metric'] + [report.name for report in reports]
        rows = [
            ['Mean ACC'] + [report.mean_accuracy for report in reports],
            ['Mean F1'] + [report.mean_macro_f1 for report in reports],
            ['Min fold ACC'] + [min(report.fold_accuracy) for report in reports],
            ['Folds'] + [report.k for report in reports],
            ['C'] + [report.c for report in reports],
        ]
        self.display_table(headers, rows, title="k-fold evaluation", plain=plain,
                           score_rows=(0, 1, 2))

    def display_confusion_matrix(self, report: EvaluationReport, plain: bool = False):
        """Rows are true classes, columns predictions."""
        names = list(report.class_names)
        headers = ['Truth \\ Pred'] + names
        rows = [[names[i]] + [int(v) for v in report.confusion[i]]
                for i in range(len(names))]
        title = f"Confusion matrix: {report.name}"
        if plain:
            # Diagonal counts are bolded green when colors are on
            if self.display_config['colored_mode']:
                for i, row in enumerate(rows):
                    row[i + 1] = colored(f"{row[i + 1]:,}", 'green', attrs=['bold'])
            self.display_columnar_table(headers, rows, title, score_rows=())
            return
        self.display_table(headers, rows, title=title, score_rows=())

    def display_crease_summary(self, summary: List[List[Any]], plain: bool = False):
        """Two-column property/value summary of one crease run."""
        self.display_table(['Property', 'Value'], summary, title="Crease pattern",
                           plain=plain, score_rows=())


# Global rich display instance
_rich_display: Optional[RichDisplay] = None


def get_rich_display() -> RichDisplay:
    """Get the global rich display instance."""
    global _rich_display
    if _rich_display is None:
        _rich_display = RichDisplay()
    return _rich_display


def reset_rich_display():
    """Drop the cached display so the next call re-reads configuration."""
    global _rich_display
    _rich_display = None
