"""
Pipeline commands for FoldMark.
Wires landmarks, shadow trees, Lang polygons, the shrinking engine,
descriptors and the classifier into the synth, crease, extract and eval commands.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence as SeqType, Tuple, Union

import numpy as np

from .classify import Dataset, EvaluationReport, kfold_evaluate
from .config_loader import PROJECT_ROOT, ConfigLoader, get_config_loader
from .crease import CreasePattern, serialize, to_svg
from .descriptors import DTNNP, DescriptorLayout, FeatureVector, dtnnp, origami_descriptor, reduce_pca
from .errors import ConfigError, FoldMarkError, InputError
from .landmarks import (Sequence, align_affine, generate_synthetic_face, normalize_to_nose,
                        select_peak_frame)
from .lang_polygon import LangPolygon, build_lang_polygon
from .molecule import TREE_METRICS, ShrinkConfig, ShrinkResult, shrink
from .rich_display import get_rich_display
from .sequence_loader import (get_sequence_loader, read_feature_csv, write_feature_csv,
                              write_manifest, write_sequence)
from .shadow_tree import ShadowTree, TreeTopology, build_shadow_tree, load_topology

logger = logging.getLogger(__name__)

ALIGNMENTS = ('neutral', 'none')
DESCRIPTOR_SETS = ('dtnnp', 'origami', 'both')


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved settings for one command run."""
    topology_path: Path
    shrink: ShrinkConfig = field(default_factory=ShrinkConfig)
    margin: float = 0.05
    min_aspect: float = 0.25
    max_aspect: float = 4.0
    layout: DescriptorLayout = field(default_factory=DescriptorLayout)
    strict_dtnnp: bool = False
    pca_dims: Optional[int] = None
    k: int = 10
    c: float = 1.0
    seed: int = 0
    kernel: str = 'quadratic'
    tol: float = 1e-3
    max_iterations: int = 100000
    class_count: int = 4
    frames: int = 8
    dimensions: int = 2
    intensity_range: Tuple[float, float] = (0.6, 1.0)
    alignment: str = 'neutral'
    jobs: int = 1
    svg: Dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_loader(cls, loader: Optional[ConfigLoader] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> 'PipelineConfig':
        """
        Assemble and validate the configuration.

        Args:
            loader: Configuration source (defaults to the global loader)
            overrides: Field values from command-line flags; None values are ignored

        Raises:
            ConfigError: Out-of-range values or a missing topology file
        """
        loader = loader or get_config_loader()
        shrink_section = loader.get_shrink_config()
        polygon = loader.get_polygon_config()
        descriptors = loader.get_descriptor_config()
        classifier = loader.get_classifier_config()
        synthetic = loader.get_synthetic_config()
        pipeline = loader.get_pipeline_config()

        topology_path = Path(loader.get_topology_path())
        if not topology_path.is_absolute():
            topology_path = PROJECT_ROOT / topology_path
        try:
            config = cls(
                topology_path=topology_path,
                shrink=ShrinkConfig.from_dict(shrink_section),
                margin=float(polygon['margin']),
                min_aspect=float(polygon['min_aspect']),
                max_aspect=float(polygon['max_aspect']),
                layout=DescriptorLayout(int(descriptors['n_max']), int(descriptors['e_max'])),
                strict_dtnnp=bool(descriptors['strict_formula']),
                pca_dims=None if descriptors['pca_dims'] is None else int(descriptors['pca_dims']),
                k=int(classifier['k']),
                c=float(classifier['c']),
                seed=int(classifier['seed']),
                kernel=str(classifier['kernel']),
                tol=float(classifier['tol']),
                max_iterations=int(classifier['max_iterations']),
                class_count=int(synthetic['class_count']),
                frames=int(synthetic['frames']),
                dimensions=int(synthetic['dimensions']),
                intensity_range=tuple(float(v) for v in synthetic['intensity_range']),
                alignment=str(pipeline['alignment']),
                jobs=int(pipeline['jobs']),
                svg=loader.get_svg_config(),
            )
        except FoldMarkError as e:
            raise ConfigError(e.message, **e.context)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration value: {e}")

        if overrides:
            config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
        config.validate()
        return config

    def validate(self):
        """Check numeric ranges and resolvable paths."""
        s = self.shrink
        if s.th is not None and s.th <= 0:
            raise ConfigError(f"shrink.th must be positive, got {s.th}")
        if s.step is not None and s.step <= 0:
            raise ConfigError(f"shrink.step must be positive, got {s.step}")
        if s.refine_tol <= 0:
            raise ConfigError(f"shrink.refine_tol must be positive, got {s.refine_tol}")
        if s.th is not None and s.refine_tol >= s.th:
            raise ConfigError(f"shrink.refine_tol ({s.refine_tol}) must be smaller than th ({s.th})")
        if s.max_events is not None and s.max_events < 1:
            raise ConfigError(f"shrink.max_events must be at least 1, got {s.max_events}")
        if s.tree_metric not in TREE_METRICS:
            raise ConfigError(f"shrink.tree_metric must be one of {TREE_METRICS}")
        if self.margin < 0:
            raise ConfigError(f"polygon.margin must be non-negative, got {self.margin}")
        if not 0 < self.min_aspect <= self.max_aspect:
            raise ConfigError("polygon aspect clamp needs 0 < min_aspect <= max_aspect")
        if self.pca_dims is not None and self.pca_dims < 1:
            raise ConfigError(f"descriptors.pca_dims must be at least 1, got {self.pca_dims}")
        if self.k < 2:
            raise ConfigError(f"classifier.k must be at least 2, got {self.k}")
        if self.c <= 0:
            raise ConfigError(f"classifier.c must be positive, got {self.c}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        if self.alignment not in ALIGNMENTS:
            raise ConfigError(f"pipeline.alignment must be one of {ALIGNMENTS}")
        if self.dimensions not in (2, 3):
            raise ConfigError(f"synthetic.dimensions must be 2 or 3, got {self.dimensions}")
        if self.frames < 2:
            raise ConfigError(f"synthetic.frames must be at least 2, got {self.frames}")
        low, high = self.intensity_range
        if not 0.0 <= low <= high <= 1.0:
            raise ConfigError(f"synthetic.intensity_range must lie in [0, 1], got {self.intensity_range}")
        if not self.topology_path.exists():
            raise ConfigError(f"topology file not found: {self.topology_path}",
                              path=str(self.topology_path))


@dataclass(frozen=True)
class CreaseRun:
    """Everything one sequence produces on its way to a crease pattern."""
    sequence: Sequence
    peak_index: int
    tree: ShadowTree
    polygon: LangPolygon
    result: ShrinkResult

    @property
    def pattern(self) -> CreasePattern:
        return self.result.pattern

    def summary_rows(self) -> List[List[Any]]:
        counts = self.result.event_counts()
        return [
            ['Subject', self.sequence.subject or '-'],
            ['Peak frame', self.peak_index],
            ['Leaves', self.tree.leaf_count],
            ['Tree nodes', self.tree.node_count],
            ['Polygon scale', self.polygon.scale],
            ['Contractions', counts['contraction']],
            ['Splits', counts['split']],
            ['Terminals', counts['terminal']],
            ['Crease nodes', len(self.pattern.nodes)],
            ['Crease edges', len(self.pattern.edges)],
        ]


def align_sequence(sequence: Sequence, alignment: str = 'neutral') -> Sequence:
    """Affinely align every frame to the neutral frame, or return the sequence unchanged."""
    if alignment == 'none':
        return sequence
    neutral = sequence.neutral
    frames = tuple(frame if i == sequence.neutral_index else align_affine(frame, neutral).frame
                   for i, frame in enumerate(sequence.frames))
    return replace(sequence, frames=frames)


def crease_sequence(sequence: Sequence, topology: TreeTopology,
                    config: PipelineConfig) -> CreaseRun:
    """Peak frame -> nose-normalized shadow tree -> Lang polygon -> crease pattern."""
    aligned = align_sequence(sequence, config.alignment)
    peak_index = select_peak_frame(aligned)
    peak = normalize_to_nose(aligned.frames[peak_index])
    tree = build_shadow_tree(peak, topology)
    polygon = build_lang_polygon(tree, config.margin, config.min_aspect, config.max_aspect)
    provenance = {
        'sequence': sequence.subject,
        'frame': str(aligned.frames[peak_index].frame_index),
        'topology': topology.name,
    }
    result = shrink(polygon, tree, config.shrink, provenance)
    return CreaseRun(aligned, peak_index, tree, polygon, result)


def _write_bytes(path: Union[str, Path], data: bytes):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror}", path=str(path))


def cmd_synth(config: PipelineConfig, classes: int, samples: int,
              out_dir: Union[str, Path]) -> List[Path]:
    """
    Write synthetic landmark sequences and a manifest.

    Files are named synthetic-c<class>-s<index>.json; manifest.csv lists them
    with their labels, class-major.

    Returns:
        Paths of the written sequence files
    """
    if not 1 <= classes <= config.class_count:
        raise InputError(f"classes must lie in 1..{config.class_count}, got {classes}")
    if samples < 0:
        raise InputError(f"samples must be non-negative, got {samples}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create {out}: {e.strerror}", path=str(out))

    low, high = config.intensity_range
    written: List[Path] = []
    rows: List[Tuple[str, int]] = []
    for class_id in range(classes):
        for index in range(samples):
            rng = np.random.default_rng([config.seed, class_id, index])
            name = f"synthetic-c{class_id}-s{index}"
            sequence = generate_synthetic_face(
                class_id, float(rng.uniform(low, high)), int(rng.integers(2 ** 31)),
                frames=config.frames, dims=config.dimensions,
                class_count=config.class_count, subject=name)
            path = out / f"{name}.json"
            try:
                write_sequence(sequence, path)
            except OSError as e:
                raise InputError(f"cannot write {path}: {e.strerror}", path=str(path))
            written.append(path)
            rows.append((path.name, class_id))
    write_manifest(rows, out / 'manifest.csv')
    logger.info("wrote %d synthetic sequences to %s", len(written), out)
    return written


def cmd_crease(config: PipelineConfig, sequence_path: Union[str, Path], out: Union[str, Path],
               svg: Optional[Union[str, Path]] = None, events: Optional[Union[str, Path]] = None,
               polygon: Optional[Union[str, Path]] = None, palette: Optional[str] = None,
               show: bool = True, plain: bool = False) -> CreaseRun:
    """
    Build the crease pattern of one sequence and write it as JSON.

    Args:
        config: Pipeline configuration
        sequence_path: Landmark sequence JSON
        out: Crease pattern JSON destination
        svg: Optional SVG destination
        events: Optional JSON-lines event log destination
        polygon: Optional Lang polygon JSON destination
        palette: SVG palette override
        show: Print the summary table
        plain: Use the columnar renderer
    """
    sequence = get_sequence_loader().load_sequence(sequence_path)
    topology = load_topology(config.topology_path)
    run = crease_sequence(sequence, topology, config)

    _write_bytes(out, serialize(run.pattern))
    if svg:
        _write_bytes(svg, to_svg(run.pattern, palette or config.svg.get('palette', 'default'),
                                 float(config.svg.get('stroke_width', 0.004)),
                                 float(config.svg.get('node_radius', 0.008)),
                                 int(config.svg.get('precision', 6))))
    if events:
        _write_bytes(events, run.result.event_lines().encode('utf-8'))
    if polygon:
        _write_bytes(polygon, (json.dumps(run.polygon.to_dict(run.tree), sort_keys=True,
                                          indent=2) + '\n').encode('utf-8'))
    logger.info("crease pattern for %s: %d nodes, %d edges", sequence_path,
                len(run.pattern.nodes), len(run.pattern.edges))
    if show:
        get_rich_display().display_crease_summary(run.summary_rows(), plain=plain)
    return run


def _extract_one(path: str, descriptors: str, topology: TreeTopology,
                 config: PipelineConfig) -> Tuple[Optional[List[FeatureVector]], Optional[Dict[str, Any]]]:
    """Worker: features of one sequence, or an error report."""
    try:
        sequence = get_sequence_loader().load_sequence(path)
        blocks: List[FeatureVector] = []
        if descriptors in ('dtnnp', 'both'):
            aligned = align_sequence(sequence, config.alignment)
            peak = aligned.frames[select_peak_frame(aligned)]
            blocks.append(dtnnp(aligned.neutral, peak, config.strict_dtnnp))
        if descriptors in ('origami', 'both'):
            run = crease_sequence(sequence, topology, config)
            blocks.append(origami_descriptor(run.pattern, config.layout))
        return blocks, None
    except FoldMarkError as e:
        e.context.setdefault('path', path)
        return None, e.to_report()
    except np.linalg.LinAlgError as e:
        return None, FoldMarkError(f"linear algebra failure: {e}", path=path).to_report()
    except ValueError as e:
        return None, InputError(f"invalid data: {e}", path=path).to_report()


def cmd_extract(config: PipelineConfig, manifest: Union[str, Path], descriptors: str,
                out: Union[str, Path], pca_dims: Optional[int] = None) -> Tuple[str, np.ndarray]:
    """
    Extract one feature row per manifest entry into a CSV.

    Rows keep manifest order whatever the worker count. Any failing row aborts
    the whole extraction before the CSV is written.

    Returns:
        (descriptor id, feature matrix)
    """
    if descriptors not in DESCRIPTOR_SETS:
        raise ConfigError(f"descriptors must be one of {DESCRIPTOR_SETS}, got {descriptors!r}")
    pca_dims = pca_dims if pca_dims is not None else config.pca_dims
    if pca_dims is not None and descriptors == 'dtnnp':
        raise ConfigError("--pca reduces the origami block; use origami or both")

    entries = get_sequence_loader().load_manifest(manifest)
    topology = load_topology(config.topology_path)
    paths = [str(entry.path) for entry in entries]
    args = ([descriptors] * len(paths), [topology] * len(paths), [config] * len(paths))
    if config.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_extract_one, paths, *args))
    else:
        outcomes = [_extract_one(*row) for row in zip(paths, *args)]

    failures = [(entry.row, report) for entry, (_, report) in zip(entries, outcomes)
                if report is not None]
    if failures:
        for row, report in failures:
            logger.error("manifest row %d: %s", row, report['message'])
        exit_code = max(report['exit_code'] for _, report in failures)
        error_class = InputError if exit_code == 2 else FoldMarkError
        raise error_class(f"{len(failures)} of {len(entries)} sequences failed; nothing written",
                          failures=[dict(report, row=row) for row, report in failures])

    rows = [blocks for blocks, _ in outcomes]
    descriptor_id, matrix, columns = _assemble(rows, descriptors, config.layout, pca_dims)
    write_feature_csv(out, descriptor_id, [Path(p).stem for p in paths],
                      [entry.label for entry in entries], matrix, columns)
    logger.info("extracted %d x %d %s features to %s", matrix.shape[0], matrix.shape[1],
                descriptor_id, out)
    return descriptor_id, matrix


def _assemble(rows: List[List[FeatureVector]], descriptors: str, layout: DescriptorLayout,
              pca_dims: Optional[int]) -> Tuple[str, np.ndarray, Tuple[str, ...]]:
    """Stack per-sequence blocks into one matrix, PCA-reducing the origami block if asked."""
    if not rows:
        if descriptors == 'dtnnp':
            return DTNNP, np.zeros((0, 0)), ()
        return layout.descriptor_id, np.zeros((0, layout.length)), layout.column_names()

    dtnnp_block = origami_block = None
    dtnnp_columns: Tuple[str, ...] = ()
    origami_columns: Tuple[str, ...] = ()
    if descriptors in ('dtnnp', 'both'):
        dtnnp_block = np.vstack([r[0].values for r in rows])
        dtnnp_columns = rows[0][0].column_names
    if descriptors in ('origami', 'both'):
        origami_block = np.vstack([r[-1].values for r in rows])
        origami_columns = rows[0][-1].column_names
        origami_id = layout.descriptor_id
        if pca_dims is not None:
            fitted = reduce_pca(origami_block, pca_dims)
            origami_block = fitted.projected
            origami_columns = fitted.column_names()
            origami_id = f"pca[{origami_id},k={pca_dims}]"

    if descriptors == 'dtnnp':
        return DTNNP, dtnnp_block, dtnnp_columns
    if descriptors == 'origami':
        return origami_id, origami_block, origami_columns
    return (f"combined[{DTNNP}+{origami_id}]", np.hstack([dtnnp_block, origami_block]),
            dtnnp_columns + origami_columns)


def cmd_eval(config: PipelineConfig, csv_paths: SeqType[Union[str, Path]],
             report: Optional[Union[str, Path]] = None, show: bool = True,
             plain: bool = False) -> List[EvaluationReport]:
    """
    k-fold evaluate each feature CSV and print one metrics column per file.

    Args:
        config: Pipeline configuration (k, c, seed, kernel, jobs)
        csv_paths: Feature CSVs from cmd_extract
        report: Optional JSON report destination
        show: Print the metrics and confusion tables
        plain: Use the columnar renderer
    """
    if not csv_paths:
        raise InputError("eval needs at least one feature CSV")
    reports = []
    for path in csv_paths:
        table = read_feature_csv(path)
        data = Dataset(table.matrix, table.labels)
        reports.append(kfold_evaluate(data, config.k, config.c, config.seed, config.kernel,
                                      config.tol, config.max_iterations, config.jobs,
                                      name=Path(path).stem))

    if report:
        document = {
            'descriptor_files': [str(p) for p in csv_paths],
            'reports': [r.to_dict() for r in reports],
        }
        _write_bytes(report, (json.dumps(document, sort_keys=True, indent=2) + '\n').encode('utf-8'))
    if show:
        display = get_rich_display()
        display.display_metrics_table(reports, plain=plain)
        for r in reports:
            display.display_confusion_matrix(r, plain=plain)
    return reports
