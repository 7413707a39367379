#! env python3

from __future__ import annotations

import dataclasses
import io
import logging
import math
import os
import typing

import numpy as np
import pandas as pd

from . import artifact
from . import configurable
from . import errors
from . import formats

log = logging.getLogger(__name__)

# little-endian int32 timestamp followed by float32 value
RECORD = np.dtype([('timestamp', '<i4'), ('value', '<f4')])
CSV_COLUMNS = ('timestamp', 'sensor_id', 'channel', 'value')
# channels whose spread is below this (relative to their level) count as constant
CONSTANT_TOLERANCE = 1e-12

@dataclasses.dataclass(frozen=True, eq=False)
class SensorGraph:
    """Sensors as nodes carrying a lumped mass, joined by weighted undirected edges"""
    node_count: int
    edges: typing.Tuple[typing.Tuple[int, int, float], ...]
    node_masses: np.ndarray
    channel_names: typing.Tuple[str, ...] = ('acceleration',)

    def __post_init__(self):
        if self.node_count < 1:
            raise errors.DomainError(f"node_count must be positive, got {self.node_count}")
        masses = np.asarray(self.node_masses, dtype=np.float64)
        if masses.shape != (self.node_count,):
            raise errors.DomainError(f"expected {self.node_count} node masses, got shape {masses.shape}")
        if not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise errors.DomainError(f"node masses must be finite and strictly positive, got {masses.tolist()}")
        object.__setattr__(self, 'node_masses', masses)
        seen: typing.Set[typing.Tuple[int, int]] = set()
        normalized = []
        for i, j, weight in self.edges:
            i, j, weight = int(i), int(j), float(weight)
            if not (0 <= i < self.node_count and 0 <= j < self.node_count) or i == j:
                raise errors.DomainError(f"edge ({i}, {j}) out of range for {self.node_count} nodes")
            if not math.isfinite(weight):
                raise errors.DomainError(f"edge ({i}, {j}) has non-finite weight {weight}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise errors.DomainError(f"duplicate undirected edge {key}")
            seen.add(key)
            normalized.append((i, j, weight))
        object.__setattr__(self, 'edges', tuple(normalized))
        object.__setattr__(self, 'channel_names', tuple(self.channel_names))

    @classmethod
    def chain(cls, node_count: int, mass: float = 1.0, channel_names: typing.Sequence[str] = ('acceleration',)) -> SensorGraph:
        edges = tuple((i, i + 1, 1.0) for i in range(node_count - 1))
        return cls(node_count, edges, np.full(node_count, float(mass)), tuple(channel_names))

    @classmethod
    def fully_connected(cls, node_count: int, mass: float = 1.0, channel_names: typing.Sequence[str] = ('acceleration',)) -> SensorGraph:
        edges = tuple((i, j, 1.0) for i in range(node_count) for j in range(i + 1, node_count))
        return cls(node_count, edges, np.full(node_count, float(mass)), tuple(channel_names))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        adjacency = np.zeros((self.node_count, self.node_count))
        for i, j, weight in self.edges:
            adjacency[i, j] = adjacency[j, i] = weight
        return adjacency

    def with_weights(self, weights: np.ndarray) -> SensorGraph:
        """Same topology, edge weights replaced from a dense [n x n] matrix"""
        edges = tuple((i, j, float(weights[i, j])) for i, j, _ in self.edges)
        return dataclasses.replace(self, edges=edges)

@dataclasses.dataclass(frozen=True, eq=False)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray
    sensor_id: str = ''
    channel: str = ''

    def __len__(self):
        return int(self.timestamps.shape[0])

@dataclasses.dataclass(frozen=True, eq=False)
class SensorFrame:
    """All channels of all sensors on one common time base: values [n nodes x c channels x T]"""
    timestamps: np.ndarray
    sample_rate: float
    values: np.ndarray
    sensor_ids: typing.Tuple[str, ...]
    channel_names: typing.Tuple[str, ...]

    @property
    def length(self) -> int:
        return int(self.values.shape[-1])

@dataclasses.dataclass(frozen=True, eq=False)
class SignalWindow:
    start_timestamp: int
    sample_rate: float
    values: np.ndarray
    pad_count: int = 0

    def __post_init__(self):
        length = self.values.shape[-1]
        if not 0 <= self.pad_count < length:
            raise errors.DomainError(f"pad_count {self.pad_count} must lie in [0, {length})")
        if not np.all(np.isfinite(self.values)):
            raise errors.DataError("non-finite window values", [int(self.start_timestamp)])

    @property
    def length(self) -> int:
        return int(self.values.shape[-1])

    @property
    def valid_length(self) -> int:
        return self.length - self.pad_count

    def signal(self) -> np.ndarray:
        """First channel of every node, [n x l]; this feeds the signal block"""
        return self.values[:, 0, :]

    def features(self) -> np.ndarray:
        """Node features [n x d]: the first-channel samples followed by mean/std/min/max of every auxiliary channel"""
        parts = [ self.values[:, 0, :] ]
        valid = self.values[:, 1:, :self.valid_length]
        if valid.shape[1] > 0:
            parts += [ valid.mean(axis=-1), valid.std(axis=-1), valid.min(axis=-1), valid.max(axis=-1) ]
        return np.concatenate(parts, axis=-1)

@dataclasses.dataclass(frozen=True)
class DatasetSplit:
    train: typing.Tuple[int, ...]
    validation: typing.Tuple[int, ...]
    test: typing.Tuple[int, ...]
    labels: typing.Tuple[int, ...]

    def __post_init__(self):
        parts = [ set(self.train), set(self.validation), set(self.test) ]
        if parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2]:
            raise errors.DomainError("dataset splits overlap")
        if len(parts[0] | parts[1] | parts[2]) != len(self.labels):
            raise errors.DomainError(f"splits cover {len(parts[0] | parts[1] | parts[2])} windows but {len(self.labels)} are labeled")

    def assignment(self) -> typing.List[str]:
        names = [ '' ] * len(self.labels)
        for name, indices in (('train', self.train), ('validation', self.validation), ('test', self.test)):
            for index in indices:
                names[index] = name
        return names

    @classmethod
    def from_assignment(cls, assignment: typing.Sequence[str], labels: typing.Sequence[int]) -> DatasetSplit:
        if len(assignment) != len(labels):
            raise errors.SchemaError(f"{len(assignment)} split assignments for {len(labels)} labels")
        groups: typing.Dict[str, typing.List[int]] = { 'train': [], 'validation': [], 'test': [] }
        for index, name in enumerate(assignment):
            if name not in groups:
                raise errors.SchemaError(f"unknown split {name!r} for window {index}")
            groups[name].append(index)
        return cls(tuple(groups['train']), tuple(groups['validation']), tuple(groups['test']), tuple(int(label) for label in labels))

@dataclasses.dataclass(frozen=True, eq=False)
class Normalizer:
    """Per (node, channel) z-scoring fitted on the training windows; constant channels pass through"""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, windows: typing.Sequence[SignalWindow]) -> Normalizer:
        samples = np.concatenate([ window.values[:, :, :window.valid_length] for window in windows ], axis=-1)
        return cls(samples.mean(axis=-1), samples.std(axis=-1))

    def apply(self, window: SignalWindow) -> SignalWindow:
        values = window.values.copy()
        valid = window.valid_length
        scaled = self.std > CONSTANT_TOLERANCE * np.maximum(1.0, np.abs(self.mean))
        offset = np.where(scaled, self.mean, 0.0)[:, :, None]
        scale = np.where(scaled, self.std, 1.0)[:, :, None]
        values[:, :, :valid] = (values[:, :, :valid] - offset) / scale
        return dataclasses.replace(window, values=values)

# -- ingestion ---------------------------------------------------------------

def ingest_binary_stream(data: bytes, sensor_id: str = '', channel: str = '') -> TimeSeries:
    """Decode the intermediate format: repeated (int32 timestamp, float32 value), little-endian"""
    remainder = len(data) % RECORD.itemsize
    if remainder:
        raise errors.FormatError(f"truncated record of {remainder} bytes", len(data) - remainder)
    records = np.frombuffer(data, dtype=RECORD)
    nan_records = np.flatnonzero(np.isnan(records['value']))
    if nan_records.size:
        raise errors.DataError("NaN value", nan_records.tolist())
    order = np.argsort(records['timestamp'], kind='stable')
    return TimeSeries(
        records['timestamp'][order].astype(np.int64),
        records['value'][order].astype(np.float64),
        sensor_id, channel)

def emit_binary(series: TimeSeries) -> bytes:
    timestamps = np.asarray(series.timestamps)
    info = np.iinfo(np.int32)
    if timestamps.size and (timestamps.min() < info.min or timestamps.max() > info.max):
        raise errors.DomainError(f"timestamps of {series.sensor_id}/{series.channel} do not fit a 4-byte integer")
    records = np.empty(timestamps.shape[0], dtype=RECORD)
    records['timestamp'] = timestamps
    records['value'] = series.values
    return records.tobytes()

def ingest_csv(rows: str) -> typing.Dict[typing.Tuple[str, str], TimeSeries]:
    """Read `timestamp,sensor_id,channel,value` rows, grouped by (sensor, channel) and sorted by time"""
    try:
        frame = pd.read_csv(io.StringIO(rows), dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise errors.SchemaError("missing header row", 1)
    missing = [ column for column in CSV_COLUMNS if column not in frame.columns ]
    if missing:
        raise errors.SchemaError(f"missing column(s) {', '.join(missing)}", 1)
    # blank lines at the end of the file are not rows
    filled = frame.fillna('').astype(str)
    kept = np.flatnonzero(~(filled.apply(lambda column: column.str.strip()) == '').all(axis=1).to_numpy())
    frame = filled.iloc[:kept[-1] + 1 if kept.size else 0]
    timestamps = pd.to_numeric(frame['timestamp'].str.strip(), errors='coerce')
    values = pd.to_numeric(frame['value'].str.strip(), errors='coerce')
    bad = (timestamps.isna() | values.isna() | (timestamps != timestamps.round())).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise errors.SchemaError(f"unparseable row {frame.iloc[row].tolist()}", row + 2)
    frame = frame.assign(timestamp=timestamps.astype(np.int64), value=values.astype(np.float64))
    result: typing.Dict[typing.Tuple[str, str], TimeSeries] = {}
    for (sensor_id, channel), group in frame.groupby(['sensor_id', 'channel'], sort=True):
        group = group.sort_values('timestamp', kind='stable')
        result[(str(sensor_id), str(channel))] = TimeSeries(
            group['timestamp'].to_numpy(np.int64), group['value'].to_numpy(np.float64), str(sensor_id), str(channel))
    return result

def emit_csv(series: typing.Iterable[TimeSeries]) -> str:
    frames = [ pd.DataFrame({
        'timestamp': item.timestamps, 'sensor_id': item.sensor_id, 'channel': item.channel, 'value': item.values
    }, columns=list(CSV_COLUMNS)) for item in series ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(CSV_COLUMNS))
    return frame.to_csv(index=False, float_format='%.17g')

def assemble_frame(
    series: typing.Mapping[typing.Tuple[str, str], TimeSeries],
    sample_rate: float,
    sensor_ids: None|typing.Sequence[str] = None,
    channel_names: None|typing.Sequence[str] = None
) -> SensorFrame:
    """Put every channel on the time base of the most densely sampled one; slower channels are
    forward-filled (samples before their first measurement take that first measurement)"""
    if not series:
        return SensorFrame(np.zeros(0, dtype=np.int64), sample_rate, np.zeros((0, 0, 0)), (), ())
    sensor_ids = tuple(sensor_ids) if sensor_ids is not None else tuple(sorted({ key[0] for key in series }))
    channel_names = tuple(channel_names) if channel_names is not None else tuple(dict.fromkeys(key[1] for key in series))
    base = max(series.values(), key=len).timestamps
    values = np.zeros((len(sensor_ids), len(channel_names), base.shape[0]))
    for i, sensor_id in enumerate(sensor_ids):
        for c, channel in enumerate(channel_names):
            if (sensor_id, channel) not in series:
                raise errors.DomainError(f"no series for sensor {sensor_id} channel {channel}")
            item = series[(sensor_id, channel)]
            if len(item) == 0:
                raise errors.DomainError(f"empty series for sensor {sensor_id} channel {channel}")
            index = np.searchsorted(item.timestamps, base, side='right') - 1
            values[i, c] = item.values[np.clip(index, 0, None)]
    return SensorFrame(base.astype(np.int64), float(sample_rate), values, sensor_ids, channel_names)

def window_count(length: int, stride: int) -> int:
    return 0 if length == 0 else math.ceil(length / stride)

def window_and_pad(frame: SensorFrame, l: int, stride: int) -> typing.List[SignalWindow]:
    """Cut the frame into windows of exactly l samples starting every `stride` samples;
    windows running past the end are zero-padded and remember how much was padded"""
    if l < 1 or stride < 1:
        raise errors.DomainError(f"window length and stride must be >= 1, got l={l} stride={stride}")
    length = frame.length
    count = window_count(length, stride)
    if count == 0:
        return []
    padded_length = (count - 1) * stride + l
    padded = np.zeros(frame.values.shape[:-1] + (padded_length,))
    padded[..., :length] = frame.values
    return [
        SignalWindow(
            int(frame.timestamps[k * stride]),
            frame.sample_rate,
            padded[..., k * stride:k * stride + l].copy(),
            max(0, k * stride + l - length))
        for k in range(count)
    ]

def window_labels(sample_labels: np.ndarray, l: int, stride: int) -> typing.List[int]:
    """A window is anomalous when any of its unpadded samples is"""
    length = sample_labels.shape[0]
    return [ int(np.any(sample_labels[k * stride:k * stride + l])) for k in range(window_count(length, stride)) ]

# -- splits ------------------------------------------------------------------

def assign_splits(labels: typing.Sequence[int], ratios: typing.Sequence[float]) -> DatasetSplit:
    """Training takes the earliest normal windows; every remaining window is dealt to validation
    and test in ratio order, so both keep the class mix"""
    if len(ratios) != 3 or any(ratio < 0 for ratio in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise errors.ConfigurationError('split_ratios', f"three non-negative ratios summing to 1 expected, got {list(ratios)}")
    normal = [ index for index, label in enumerate(labels) if not label ]
    if not normal:
        raise errors.ConfigurationError('labels', "no normal windows to train on")
    train_count = int(round(ratios[0] * len(normal)))
    train = normal[:train_count]
    taken = set(train)
    remaining = [ index for index in range(len(labels)) if index not in taken ]
    held_out = ratios[1] + ratios[2]
    share = ratios[1] / held_out if held_out > 0 else 0.0
    validation, test = [], []
    for position, index in enumerate(remaining):
        if math.floor((position + 1) * share + 1e-9) > math.floor(position * share + 1e-9):
            validation.append(index)
        else:
            test.append(index)
    return DatasetSplit(tuple(train), tuple(validation), tuple(test), tuple(int(label) for label in labels))

def split_and_normalize(
    windows: typing.Sequence[SignalWindow],
    labels: typing.Sequence[int],
    ratios: typing.Sequence[float] = (0.8, 0.1, 0.1),
    split: None|DatasetSplit = None
) -> typing.Tuple[DatasetSplit, Normalizer, typing.List[SignalWindow]]:
    if len(windows) != len(labels):
        raise errors.DomainError(f"{len(windows)} windows but {len(labels)} labels")
    split = split if split is not None else assign_splits(labels, ratios)
    if any(split.labels[index] for index in split.train):
        raise errors.ConfigurationError('splits', "training split contains anomalous windows")
    if not split.train:
        raise errors.ConfigurationError('split_ratios', "training split is empty")
    normalizer = Normalizer.fit([ windows[index] for index in split.train ])
    return split, normalizer, [ normalizer.apply(window) for window in windows ]

# -- configuration -----------------------------------------------------------

class RunConfig(artifact.Artifact):
    """Hyper-parameters of one pipeline run"""
    window_length: configurable.Var[int]
    stride: configurable.Var[int]
    batch_size: configurable.Var[int]
    layer: configurable.Var[str]
    layer_count: configurable.Var[int]
    hidden_dims: configurable.Var[int]
    bottleneck: configurable.Var[int]
    cheb_order: configurable.Var[int]
    retained_modes: configurable.Var[int]
    damping_ratio: configurable.Var[float]
    stiffness: configurable.Var[float]
    percentile: configurable.Var[float]
    learning_rate: configurable.Var[float]
    epochs: configurable.Var[int]
    seed: configurable.Var[int]
    split_ratios: configurable.Var[list]
    psd_product: configurable.Var[str]
    svd_method: configurable.Var[str]
    threshold: configurable.Var[str]
    features: configurable.Var[str]
    graphcon: configurable.Var[bool]
    graphcon_dt: configurable.Var[float]
    graphcon_alpha: configurable.Var[float]
    graphcon_gamma: configurable.Var[float]
    dropout: configurable.Var[float]

    def __init__(self, artifact_path: typing.Union[ None, typing.List[str] ] = None):
        super().__init__(artifact_path)
        self.window_length = configurable.Var(self, 'window_length', 5)
        self.stride = configurable.Var(self, 'stride', 1)
        self.batch_size = configurable.Var(self, 'batch_size', 256)
        self.layer = configurable.Var(self, 'layer', 'fast', 'fast', 'laplace', 'cheb')
        self.layer_count = configurable.Var(self, 'layer_count', 3, 1, 3, 5, 10)
        self.hidden_dims = configurable.Var(self, 'hidden_dims', 8, 4, 8, 16)
        self.bottleneck = configurable.Var(self, 'bottleneck', 2, 1, 2, 4)
        self.cheb_order = configurable.Var(self, 'cheb_order', 5, *range(2, 9))
        self.retained_modes = configurable.Var(self, 'retained_modes', 2)
        self.damping_ratio = configurable.Var(self, 'damping_ratio', 0.02)
        self.stiffness = configurable.Var(self, 'stiffness')
        self.percentile = configurable.Var(self, 'percentile', 0.95)
        self.learning_rate = configurable.Var(self, 'learning_rate', 0.01)
        self.epochs = configurable.Var(self, 'epochs', 50)
        self.seed = configurable.Var(self, 'seed', 0)
        self.split_ratios = configurable.Var(self, 'split_ratios', [0.8, 0.1, 0.1])
        self.psd_product = configurable.Var(self, 'psd_product', 'matrix', 'matrix', 'elementwise', 'conjugate')
        self.svd_method = configurable.Var(self, 'svd_method', 'lapack', 'lapack', 'jacobi')
        self.threshold = configurable.Var(self, 'threshold', 'l1', 'l1', 'mahalanobis')
        self.features = configurable.Var(self, 'features', 'samples', 'samples', 'spectrum')
        self.graphcon = configurable.Var(self, 'graphcon', False)
        self.graphcon_dt = configurable.Var(self, 'graphcon_dt', 1.0)
        self.graphcon_alpha = configurable.Var(self, 'graphcon_alpha', 1.0)
        self.graphcon_gamma = configurable.Var(self, 'graphcon_gamma', 1.0)
        self.dropout = configurable.Var(self, 'dropout', 0.0)

    def validate(self, node_count: None|int = None) -> RunConfig:
        """Check every range; raises ConfigurationError naming the field"""
        self.configure()
        def check(var: configurable.Var, ok: bool, message: str):
            if not ok:
                raise errors.ConfigurationError(var.field(), f"{var()!r} {message}")
        check(self.window_length, self.window_length() >= 2, "must be >= 2")
        check(self.stride, self.stride() >= 1, "must be >= 1")
        check(self.batch_size, self.batch_size() >= 1, "must be >= 1")
        check(self.retained_modes, self.retained_modes() >= 1, "must be >= 1")
        if node_count is not None:
            check(self.retained_modes, self.retained_modes() <= node_count, f"must not exceed the {node_count} nodes")
        check(self.damping_ratio, 0 <= self.damping_ratio() < 1, "must lie in [0, 1)")
        if self.stiffness:
            check(self.stiffness, self.stiffness() > 0, "must be > 0")
        check(self.percentile, 0 < self.percentile() < 1, "must lie in (0, 1)")
        check(self.learning_rate, self.learning_rate() >= 0, "must be >= 0")
        check(self.epochs, self.epochs() >= 0, "must be >= 0")
        check(self.split_ratios, len(self.split_ratios()) == 3 and abs(sum(self.split_ratios()) - 1) <= 1e-9, "must be three ratios summing to 1")
        check(self.graphcon_dt, self.graphcon_dt() > 0, "must be > 0")
        check(self.graphcon_alpha, 0 <= self.graphcon_alpha() <= 2, "must lie in [0, 2]")
        check(self.graphcon_gamma, 0 <= self.graphcon_gamma() <= 2, "must lie in [0, 2]")
        check(self.dropout, 0 <= self.dropout() < 1, "must lie in [0, 1)")
        return self

# -- manifest ----------------------------------------------------------------

class Manifest(artifact.Artifact):
    """Describes one dataset on disk: channel files, labels, split assignment and the structure it was measured on"""
    format: configurable.Var[str]
    sample_rate: configurable.Var[float]
    channels: configurable.Var[list]
    node_masses: configurable.Var[list]
    stiffness: configurable.Var[float]
    damping_ratio: configurable.Var[float]
    edges: configurable.Var[list]
    window_length: configurable.Var[int]
    stride: configurable.Var[int]
    labels: configurable.Var[list]
    splits: configurable.Var[list]
    seed: configurable.Var[int]
    spec_hash: configurable.Var[str]
    code_version: configurable.Var[str]

    def __init__(self, artifact_path: typing.Union[ None, typing.List[str] ] = None):
        super().__init__(artifact_path)
        self.format = configurable.Var(self, 'format', 'binary', 'binary', 'csv')
        self.sample_rate = configurable.Var(self, 'sample_rate')
        self.channels = configurable.Var(self, 'channels', [])
        self.node_masses = configurable.Var(self, 'node_masses')
        self.stiffness = configurable.Var(self, 'stiffness', 1.0)
        self.damping_ratio = configurable.Var(self, 'damping_ratio', 0.02)
        self.edges = configurable.Var(self, 'edges', [])
        self.window_length = configurable.Var(self, 'window_length', 5)
        self.stride = configurable.Var(self, 'stride', 1)
        self.labels = configurable.Var(self, 'labels', [])
        self.splits = configurable.Var(self, 'splits', [])
        self.seed = configurable.Var(self, 'seed', 0)
        self.spec_hash = configurable.Var(self, 'spec_hash', '')
        self.code_version = configurable.Var(self, 'code_version', '')

    def graph(self) -> SensorGraph:
        masses = np.asarray(self.node_masses(), dtype=np.float64)
        channel_names = tuple(dict.fromkeys(entry['channel'] for entry in self.channels()))
        return SensorGraph(masses.shape[0], tuple(tuple(edge) for edge in self.edges()), masses, channel_names or ('acceleration',))

    def split(self) -> DatasetSplit:
        return DatasetSplit.from_assignment(self.splits(), self.labels())

    def load_frame(self, base_dir: str) -> SensorFrame:
        """Read every channel file listed in the manifest and align them on one time base"""
        series: typing.Dict[typing.Tuple[str, str], TimeSeries] = {}
        for entry in self.channels():
            path = os.path.join(base_dir, entry['path'])
            try:
                if self.format() == 'binary':
                    with open(path, 'rb') as fp:
                        series[(str(entry['sensor_id']), entry['channel'])] = ingest_binary_stream(fp.read(), str(entry['sensor_id']), entry['channel'])
                else:
                    with open(path, 'rt') as fp:
                        series.update(ingest_csv(fp.read()))
            except OSError as e:
                raise errors.ConfigurationError(path, f"cannot read channel file: {e.strerror}")
        sensor_ids = tuple(dict.fromkeys(str(entry['sensor_id']) for entry in self.channels()))
        channel_names = tuple(dict.fromkeys(entry['channel'] for entry in self.channels()))
        return assemble_frame(series, self.sample_rate(), sensor_ids, channel_names)

def read_manifest(path: str) -> Manifest:
    manifest = formats.load_file(path, into=Manifest())
    if not isinstance(manifest, Manifest):
        raise errors.ConfigurationError(path, f"is not a dataset manifest, it is a {manifest}")
    return manifest
