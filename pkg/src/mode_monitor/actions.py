from __future__ import annotations

import abc
import argparse
import dataclasses
import logging
import os
import platform
import time
import typing

import numpy as np
import pandas as pd
import scipy

from . import __version__
from . import anomaly
from . import artifact
from . import core
from . import errors
from . import formats
from . import modeconv
from . import nn
from . import simulator
from . import structure

log = logging.getLogger(__name__)

BENCH_FEATURE_WIDTH = 8

class Verb:
    @abc.abstractmethod
    def get_names(self) -> typing.List[str]:
        raise RuntimeError('Unsupported method in base class')

    @abc.abstractmethod
    def load(self, config_path: None|str) -> artifact.Artifact:
        raise RuntimeError('Unsupported method in base class')

    @abc.abstractmethod
    def __call__(self, config: artifact.Artifact, args: argparse.Namespace, phase: artifact.Phase) -> typing.Any:
        raise RuntimeError('Unsupported method in base class')

ArtifactType = typing.TypeVar('ArtifactType', bound=artifact.Artifact)

class Do(Verb, typing.Generic[ArtifactType]):
    """A verb whose configuration file holds an `ArtifactType`"""
    def __init__(
        self,
        names: typing.List[str],
        config_class: typing.Type[ArtifactType],
        exec: typing.Callable[ [ArtifactType, argparse.Namespace, artifact.Phase], typing.Any],
        help: str = ''
    ):
        self.names = names
        self.config_class = config_class
        self.exec = exec
        self.help = help

    def get_names(self) -> typing.List[str]:
        return list(self.names)

    def load(self, config_path: None|str) -> ArtifactType:
        return load_config(config_path, self.config_class)

    def __call__(self, config: ArtifactType, args: argparse.Namespace, phase: artifact.Phase) -> typing.Any:
        return self.exec(config, args, phase)

def load_config(config_path: None|str, config_class: typing.Type[ArtifactType]) -> ArtifactType:
    """Read a configuration file into a fresh `config_class`; no path gives the defaults"""
    config = config_class()
    if config_path is not None:
        formats.load_file(config_path, into=config)
    return config

# -- simulate -----------------------------------------------------------------

def cmd_simulate(spec: str|simulator.ScenarioSpec, out_dir: str, format: None|str = None) -> core.Manifest:
    if isinstance(spec, str):
        spec = load_config(spec, simulator.ScenarioSpec)
    spec.validate()
    output = simulator.simulate(spec)
    return simulator.emit_dataset(output, spec, out_dir, format)

# -- train --------------------------------------------------------------------

def load_dataset(
    manifest_path: str,
    config: core.RunConfig,
    normalizer: None|core.Normalizer = None,
    scaler: None|nn.FeatureScaler = None
) -> typing.Tuple[core.Manifest, nn.PreparedDataset]:
    """Windows, labels and split from the manifest, normalized and batched with their modal contexts.
    The manifest's window length and stride win over the configured ones, as its labels depend on them."""
    manifest = core.read_manifest(manifest_path)
    frame = manifest.load_frame(os.path.dirname(os.path.abspath(manifest_path)))
    graph = manifest.graph()
    config.validate(graph.node_count)
    if (config.window_length(), config.stride()) != (manifest.window_length(), manifest.stride()):
        log.warning(f"manifest windows l={manifest.window_length()} stride={manifest.stride()} replace configured l={config.window_length()} stride={config.stride()}")
        config.alias(window_length=manifest.window_length(), stride=manifest.stride())
    windows = core.window_and_pad(frame, config.window_length(), config.stride())
    labels = manifest.labels()
    if len(labels) != len(windows):
        raise errors.SchemaError(f"{manifest_path} labels {len(labels)} windows but the data yields {len(windows)}")
    split = manifest.split() if manifest.splits() else None
    if normalizer is None:
        split, normalizer, windows = core.split_and_normalize(windows, labels, config.split_ratios(), split)
    else:
        split = split if split is not None else core.assign_splits(labels, config.split_ratios())
        windows = [ normalizer.apply(window) for window in windows ]
    stiffness = config.stiffness() if config.stiffness else manifest.stiffness()
    matrices = structure.assemble_matrices(graph, stiffness, config.damping_ratio())
    return manifest, nn.prepare_dataset(windows, split, normalizer, graph, matrices, config, scaler)

def write_history(state: nn.TrainState, path: str):
    frame = pd.DataFrame(dict(
        epoch=np.arange(1, len(state.train_loss) + 1),
        train_loss=state.train_loss, validation_loss=state.validation_loss, gradient_norm=state.gradient_norms))
    try:
        frame.to_csv(path, index=False, float_format='%.17g')
    except OSError as e:
        raise errors.ConfigurationError(path, f"cannot write loss history: {e.strerror}")

def cmd_train(
    manifest_path: str,
    config: None|str|core.RunConfig,
    out_dir: str,
    checkpoint_path: None|str = None,
    resume: bool = False
) -> nn.Checkpoint:
    """Train on the normal windows of the manifest; writes `checkpoint.json` and `history.csv` into out_dir"""
    config = config if isinstance(config, core.RunConfig) else load_config(config, core.RunConfig)
    _, dataset = load_dataset(manifest_path, config)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise errors.ConfigurationError(out_dir, f"cannot create output directory: {e.strerror}")
    checkpoint_path = checkpoint_path or os.path.join(out_dir, 'checkpoint.json')
    _, state, checkpoint = nn.train(dataset, config, checkpoint_path, resume)
    artifact.PersistInFile(checkpoint_path, checkpoint).save()
    write_history(state, os.path.join(out_dir, 'history.csv'))
    log.info(f"trained {state.epoch} epochs, best validation {state.best_validation} at epoch {state.best_epoch}")
    return checkpoint

# -- eval ---------------------------------------------------------------------

def read_checkpoint(path: str) -> nn.Checkpoint:
    if not os.path.exists(path):
        raise errors.ConfigurationError(path, "no such checkpoint")
    checkpoint = artifact.PersistInFile(path, nn.Checkpoint()).load()
    if checkpoint.format_version() != nn.CHECKPOINT_FORMAT:
        raise errors.ConfigurationError(path, f"checkpoint format {checkpoint.format_version()} is not {nn.CHECKPOINT_FORMAT}")
    return checkpoint

def cmd_eval(
    checkpoint_path: str,
    manifest_path: str,
    threshold_kind: None|str = None,
    out_dir: str = '.'
) -> typing.Tuple[anomaly.AnomalyReport, anomaly.ThresholdModel]:
    """Fit the threshold on training residuals, score the test split, write `report_<kind>.json` and `.csv`"""
    checkpoint = read_checkpoint(checkpoint_path)
    config = checkpoint.config
    kind = threshold_kind or config.threshold()
    manifest, dataset = load_dataset(manifest_path, config, checkpoint.normalizer(), checkpoint.scaler())
    if dataset.input_width != checkpoint.input_width():
        raise errors.SchemaError(f"checkpoint expects {checkpoint.input_width()} features per node, the data has {dataset.input_width}")
    model = checkpoint.model()
    _, train_residuals = nn.residuals(model, dataset, 'train')
    threshold = anomaly.fit_threshold(kind, train_residuals, config.percentile())
    windows, test_residuals = nn.residuals(model, dataset, 'test')
    if windows.shape[0] == 0:
        raise errors.ConfigurationError('splits', "test split is empty")
    scores = threshold.score(test_residuals)
    flags = anomaly.classify(scores, threshold)
    report = anomaly.metrics(flags, [ dataset.split.labels[index] for index in windows ], scores)
    extra = dict(
        config_hash=formats.digest(config.settings()), code_version=__version__,
        spec_hash=manifest.spec_hash(), checkpoint_epoch=checkpoint.epoch())
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise errors.ConfigurationError(out_dir, f"cannot create output directory: {e.strerror}")
    anomaly.write_report(
        report, threshold,
        os.path.join(out_dir, f"report_{kind}.json"), os.path.join(out_dir, f"report_{kind}.csv"),
        extra, windows.tolist(), dict(reconstruction_error=anomaly.l1_scores(test_residuals)))
    log.info(f"{kind}: threshold {threshold.threshold:.6g} F1 {report.f1:.4f} AUC {report.auc:.4f}")
    return report, threshold

# -- bench --------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class BenchRow:
    kind: str
    nodes: int
    edges: int
    edges_expected: int
    order: int
    seconds: float
    multiply_adds: int

@dataclasses.dataclass(frozen=True, eq=False)
class BenchReport:
    rows: typing.List[BenchRow]
    environment: typing.Dict[str, str]
    settings: typing.Dict[str, typing.Any]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([ dataclasses.asdict(row) for row in self.rows ], columns=[ field.name for field in dataclasses.fields(BenchRow) ])

    def write(self, out_dir: str):
        content = dict(
            settings=self.settings, environment=self.environment, code_version=__version__,
            config_hash=formats.digest(self.settings), rows=[ dataclasses.asdict(row) for row in self.rows ])
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, 'bench.json'), 'wt') as fp:
                fp.write(formats.dumps(content))
            self.frame().to_csv(os.path.join(out_dir, 'bench.csv'), index=False, float_format='%.17g')
        except OSError as e:
            raise errors.ConfigurationError(e.filename or out_dir, f"cannot write bench report: {e.strerror}")

def environment() -> typing.Dict[str, str]:
    return dict(
        platform=platform.platform(), python=platform.python_version(),
        numpy=np.__version__, scipy=scipy.__version__, processor=platform.processor() or platform.machine())

def bench_forward(kind: str, graph: core.SensorGraph, order: int, rng: np.random.Generator) -> typing.Callable[[ None|modeconv.OperationCounter ], np.ndarray]:
    """One forward pass of the named layer on random features, as a closure over its fixed operands"""
    n, d = graph.node_count, BENCH_FEATURE_WIDTH
    x = rng.standard_normal((n, d))
    L, A_norm = modeconv.normalized_laplacian(graph)
    if kind == 'fast':
        basis, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        bank = modeconv.ComplexFilterBank(
            basis[:, :order], np.sort(rng.uniform(size=order))[::-1],
            rng.standard_normal((d, d)), rng.standard_normal((d, d)))
        return lambda counter: modeconv.modeconv_fast_forward(x, bank, counter=counter)
    if kind == 'laplace':
        W_r, W_i = rng.standard_normal((d, d)), rng.standard_normal((d, d))
        return lambda counter: modeconv.modeconv_laplace_forward(x, None, A_norm, W_r, W_i, counter)
    if kind == 'cheb':
        cheb = modeconv.ChebFilter(order, rng.standard_normal((order + 1, d, d)), modeconv.scaled_laplacian(L))
        return lambda counter: modeconv.cheb_forward(x, cheb, counter)
    raise errors.ConfigurationError('kinds', f"{kind!r} is not one of {nn.LAYER_KINDS}")

def cmd_bench(
    sizes: typing.Sequence[int] = (32, 64, 128),
    kinds: typing.Sequence[str] = nn.LAYER_KINDS,
    cheb_order: int = 5,
    modes: None|int = None,
    repetitions: int = 5,
    seed: int = 0,
    out_dir: None|str = None
) -> BenchReport:
    """Median wall time and exact multiply-add count of one forward pass per (kind, n) on fully connected graphs.
    Modal layers keep `modes` modes, n/4 when not given."""
    if repetitions < 1:
        raise errors.ConfigurationError('repetitions', f"{repetitions!r} must be >= 1")
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        if n < 2:
            raise errors.ConfigurationError('sizes', f"{n} nodes is too few, at least 2 are needed")
        graph = core.SensorGraph.fully_connected(n)
        expected = n * (n - 1) // 2
        if graph.edge_count != expected:
            raise errors.NumericError(f"fully connected graph on {n} nodes has {graph.edge_count} edges, not {expected}")
        for kind in kinds:
            order = cheb_order if kind == 'cheb' else (modes if modes is not None else max(1, n // 4))
            if kind == 'fast' and not 1 <= order <= n:
                raise errors.ConfigurationError('modes', f"{order} modes do not fit {n} nodes")
            forward = bench_forward(kind, graph, order, rng)
            counter = modeconv.OperationCounter()
            forward(counter)
            timings = []
            for _ in range(repetitions):
                started = time.perf_counter()
                forward(None)
                timings.append(time.perf_counter() - started)
            row = BenchRow(kind, n, graph.edge_count, expected, int(order), float(np.median(timings)), counter.total)
            log.info(f"{kind} n={n} order={order}: {row.multiply_adds} multiply-adds, {row.seconds * 1e6:.1f} us")
            rows.append(row)
    report = BenchReport(rows, environment(), dict(
        sizes=list(sizes), kinds=list(kinds), cheb_order=cheb_order, modes=modes,
        repetitions=repetitions, seed=seed, feature_width=BENCH_FEATURE_WIDTH))
    if out_dir is not None:
        report.write(out_dir)
    return report

def split_list(text: str, kind: typing.Callable[[str], typing.Any] = str) -> typing.List[typing.Any]:
    return [ kind(item.strip()) for item in text.split(',') if item.strip() ]

VERBS: typing.List[Verb] = [
    Do[simulator.ScenarioSpec](['simulate'], simulator.ScenarioSpec,
        lambda spec, args, phase: cmd_simulate(spec, args.out, args.format),
        'run a scenario and write its dataset and manifest'),
    Do[core.RunConfig](['train'], core.RunConfig,
        lambda config, args, phase: cmd_train(args.manifest, config, args.out, args.checkpoint, args.resume),
        'train the autoencoder on the normal windows of a dataset'),
    Do[core.RunConfig](['eval'], core.RunConfig,
        lambda config, args, phase: cmd_eval(args.checkpoint, args.manifest, args.threshold, args.out),
        'score the test split of a dataset and write the anomaly reports'),
    Do[core.RunConfig](['bench'], core.RunConfig,
        lambda config, args, phase: cmd_bench(
            split_list(args.sizes, int), split_list(args.kinds), config.cheb_order(), args.modes,
            args.repetitions, config.seed(), args.out),
        'count and time single forward passes on fully connected graphs'),
]
