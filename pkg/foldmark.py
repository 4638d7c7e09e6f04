#!/usr/bin/env python3

"""
FoldMark - Origami crease-pattern descriptors for facial expression recognition.
Builds shadow trees from facial landmarks, shrinks their Lang polygons into crease
patterns, extracts DTNnp and origami features and evaluates them with a quadratic SVM.
"""

import argparse
import json
import re
import sys
import traceback
from pathlib import Path
from typing import List, Optional

from termcolor import colored

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from conf.version import AUTHOR, banner  # noqa: E402
from libs.config_loader import get_config_loader, set_config_path  # noqa: E402
from libs.errors import FoldMarkError  # noqa: E402
from libs.log_setup import configure_logging  # noqa: E402
from libs.pipeline import (DESCRIPTOR_SETS, PipelineConfig, cmd_crease, cmd_eval,  # noqa: E402
                           cmd_extract, cmd_synth)

HEADING_COLORS = {
    'General': 'cyan',
    'Synthetic': 'green',
    'Crease': 'magenta',
    'Extraction': 'blue',
    'Evaluation': 'yellow',
    'Output': 'white',
}


class ColoredHelpFormatter(argparse.RawDescriptionHelpFormatter):
    """Custom help formatter that adds colors to group headings."""

    def __init__(self, prog):
        super().__init__(prog, max_help_position=44, width=110)
        self._Section = self._ColoredSection

    class _ColoredSection(argparse.HelpFormatter._Section):
        """Section that colors its heading by group name."""

        def format_help(self):
            if self.parent is not None:
                self.formatter._indent()
            join = self.formatter._join_parts
            item_help = join([func(*args) for func, args in self.items])
            if self.parent is not None:
                self.formatter._dedent()

            if not item_help:
                return ''

            if self.heading is not argparse.SUPPRESS and self.heading is not None:
                current_indent = self.formatter._current_indent
                color = next((c for key, c in HEADING_COLORS.items() if key in self.heading),
                             'yellow')
                heading_text = colored(f"{self.heading}:", color, attrs=['bold'],
                                       force_color=True)
                heading = '%*s%s\n' % (current_indent, '', heading_text)
            else:
                heading = ''

            return join(['\n', heading, item_help, '\n'])

    def _format_usage(self, usage, actions, groups, prefix):
        colored_prefix = colored(prefix or 'usage: ', 'white', attrs=['bold'], force_color=True)
        return super()._format_usage(usage, actions, groups, colored_prefix)

    def _format_text(self, text):
        if text is None:
            return ""
        colored_lines = []
        for line in text.split('\n'):
            stripped = line.strip()
            if stripped.startswith('FoldMark ver.'):
                colored_lines.append(colored(line, 'cyan', attrs=['bold'], force_color=True))
            elif stripped.startswith('by '):
                colored_lines.append(colored(line, 'blue', force_color=True))
            elif stripped.startswith('Examples:') or re.match(r'^[A-Z][a-z]+ ?[a-z]*:$', stripped):
                colored_lines.append(colored(line, 'yellow', attrs=['bold'], force_color=True))
            elif stripped.startswith('foldmark.py'):
                colored_lines.append(colored(line, 'white', force_color=True))
            else:
                colored_lines.append(line)
        return '\n'.join(colored_lines)

    def _format_action_invocation(self, action):
        if not action.option_strings:
            return super()._format_action_invocation(action)
        parts = []
        for option_string in action.option_strings:
            color = 'cyan' if option_string.startswith('--') else 'green'
            parts.append(colored(option_string, color, force_color=True))
        invocation = ', '.join(parts)
        if action.nargs != 0:
            invocation += ' ' + self._format_args(action, self._get_default_metavar_for_optional(action))
        return invocation


def _global_options() -> argparse.ArgumentParser:
    """Flags accepted both before and after the subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    general = parent.add_argument_group('General Options')
    general.add_argument('--config', metavar='PATH', default=argparse.SUPPRESS,
                         help='Configuration file (default: FOLDMARK_CONFIG_FILE or conf/config.yaml).')
    general.add_argument('--seed', type=int, metavar='N', default=argparse.SUPPRESS,
                         help='Random seed for synthesis, fold shuffling and the solver.')
    general.add_argument('--jobs', type=int, metavar='N', default=argparse.SUPPRESS,
                         help='Worker count for extract (processes) and eval (folds).')
    general.add_argument('--debug', action='store_true', default=argparse.SUPPRESS,
                         help='Enable DEBUG logging and print tracebacks on errors.')
    return parent


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with the synth, crease, extract and eval subcommands."""
    tool = 'foldmark.py'
    common = _global_options()
    parser = argparse.ArgumentParser(
        prog=tool,
        parents=[common],
        formatter_class=ColoredHelpFormatter,
        description=f"""{banner(tool)} - Origami descriptors for facial expressions.
by {AUTHOR}

Landmarks -> shadow tree -> Lang polygon -> crease pattern -> features -> quadratic SVM.
""",
        epilog="""Examples:

  Synthetic data:
    {0} synth --classes 4 --samples 50 --out data/synth
    {0} --seed 7 synth --classes 2 --samples 10 --out data/small

  Crease patterns:
    {0} crease data/synth/synthetic-c1-s0.json --out smile.json --svg smile.svg
    {0} crease face.json --out face.json --events events.jsonl --palette mono

  Feature extraction:
    {0} extract data/synth/manifest.csv --descriptors dtnnp --out dtnnp.csv
    {0} extract data/synth/manifest.csv --descriptors both --pca 20 --out both.csv --jobs 4

  Evaluation:
    {0} eval dtnnp.csv both.csv --k 10 --c 1.0 --report report.json
    {0} eval dtnnp.csv --plain

""".format(tool))
    parser.add_argument('--version', '-v', action='version', version=banner(tool))

    commands = parser.add_subparsers(dest='command', metavar='COMMAND')

    synth = commands.add_parser('synth', parents=[common], formatter_class=ColoredHelpFormatter,
                                help='Write synthetic landmark sequences and a manifest.')
    group = synth.add_argument_group('Synthetic Options')
    group.add_argument('--classes', type=int, default=None, metavar='N',
                       help='Expression classes to generate (default: synthetic.class_count).')
    group.add_argument('--samples', type=int, required=True, metavar='N',
                       help='Sequences per class.')
    group.add_argument('--out', required=True, metavar='DIR', help='Output directory.')

    crease = commands.add_parser('crease', parents=[common], formatter_class=ColoredHelpFormatter,
                                 help='Build the crease pattern of one sequence.')
    group = crease.add_argument_group('Crease Options')
    group.add_argument('sequence', metavar='SEQUENCE', help='Landmark sequence JSON.')
    group.add_argument('--out', required=True, metavar='PATH', help='Crease pattern JSON.')
    group.add_argument('--svg', metavar='PATH', help='Also render an SVG.')
    group.add_argument('--events', metavar='PATH', help='Write the event log as JSON lines.')
    group.add_argument('--polygon', metavar='PATH', help='Write the Lang polygon as JSON.')
    group.add_argument('--palette', choices=('default', 'mono'), help='SVG palette.')
    group = crease.add_argument_group('Output Options')
    group.add_argument('--plain', action='store_true', help='Plain columnar summary.')
    group.add_argument('--quiet', '-q', action='store_true', help='No summary table.')

    extract = commands.add_parser('extract', parents=[common], formatter_class=ColoredHelpFormatter,
                                  help='Extract a feature CSV from a manifest.')
    group = extract.add_argument_group('Extraction Options')
    group.add_argument('manifest', metavar='MANIFEST', help='Manifest CSV (path,label).')
    group.add_argument('--descriptors', choices=DESCRIPTOR_SETS, default='both',
                       help='Feature blocks to extract (default: both).')
    group.add_argument('--pca', type=int, metavar='N', help='PCA-reduce the origami block to N dims.')
    group.add_argument('--out', required=True, metavar='PATH', help='Feature CSV.')

    evaluate = commands.add_parser('eval', parents=[common], formatter_class=ColoredHelpFormatter,
                                   help='k-fold evaluate one or more feature CSVs.')
    group = evaluate.add_argument_group('Evaluation Options')
    group.add_argument('features', nargs='+', metavar='CSV', help='Feature CSVs to compare.')
    group.add_argument('--k', type=int, help='Folds (default: classifier.k).')
    group.add_argument('--c', type=float, help='SVM regularization (default: classifier.c).')
    group = evaluate.add_argument_group('Output Options')
    group.add_argument('--report', metavar='PATH', help='Write the JSON report.')
    group.add_argument('--plain', action='store_true', help='Plain columnar tables.')
    group.add_argument('--quiet', '-q', action='store_true', help='No tables.')

    return parser


def _report_error(error: Exception, exit_code: int, debug: bool) -> int:
    if isinstance(error, FoldMarkError):
        report = error.to_report()
    else:
        report = {'error': type(error).__name__, 'message': str(error), 'exit_code': exit_code}
    print(json.dumps(report, sort_keys=True, default=str), file=sys.stderr)
    if debug:
        traceback.print_exception(type(error), error, error.__traceback__)
    return exit_code


def run(args: argparse.Namespace) -> None:
    """Dispatch a parsed command line."""
    overrides = {'seed': getattr(args, 'seed', None), 'jobs': getattr(args, 'jobs', None)}
    if args.command == 'eval':
        overrides.update(k=args.k, c=args.c)
    config = PipelineConfig.from_loader(get_config_loader(), overrides)

    if args.command == 'synth':
        classes = args.classes if args.classes is not None else config.class_count
        cmd_synth(config, classes, args.samples, args.out)
    elif args.command == 'crease':
        cmd_crease(config, args.sequence, args.out, svg=args.svg, events=args.events,
                   polygon=args.polygon, palette=args.palette, show=not args.quiet,
                   plain=args.plain)
    elif args.command == 'extract':
        cmd_extract(config, args.manifest, args.descriptors, args.out, pca_dims=args.pca)
    elif args.command == 'eval':
        cmd_eval(config, args.features, report=args.report, show=not args.quiet,
                 plain=args.plain)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for FoldMark; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    debug = bool(getattr(args, 'debug', False))

    if args.command is None:
        parser.print_help()
        return 0

    try:
        if getattr(args, 'config', None):
            loader = set_config_path(args.config)
        else:
            loader = get_config_loader()
        loader.get_config()
        configure_logging(debug=debug or loader.is_debug_enabled())
        run(args)
    except FoldMarkError as e:
        return _report_error(e, e.exit_code, debug)
    except (FileNotFoundError, ValueError) as e:
        # Configuration file missing or malformed
        return _report_error(e, 1, debug)
    return 0


if __name__ == "__main__":
    sys.exit(main())
