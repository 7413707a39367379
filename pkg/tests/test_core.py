import struct

import numpy as np
import pytest

from mode_monitor import core
from mode_monitor import errors

def frame_of(values, sample_rate=1.0) -> core.SensorFrame:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(1, 1, -1)
    return core.SensorFrame(
        np.arange(values.shape[-1], dtype=np.int64), sample_rate, values,
        tuple(str(i) for i in range(values.shape[0])), tuple(f"c{c}" for c in range(values.shape[1])))

# -- binary ------------------------------------------------------------------

def test_empty_stream_is_an_empty_series():
    assert len(core.ingest_binary_stream(b'')) == 0

def test_single_record():
    series = core.ingest_binary_stream(struct.pack('<if', 1, 2.5))
    assert series.timestamps.tolist() == [1]
    assert series.values.tolist() == [2.5]

def test_truncated_record_reports_offset():
    with pytest.raises(errors.FormatError) as caught:
        core.ingest_binary_stream(struct.pack('<if', 1, 2.5) + b'\x00' * 4)
    assert caught.value.offset == 8

def test_nan_record_is_listed():
    data = struct.pack('<if', 0, 1.0) + struct.pack('<if', 1, float('nan'))
    with pytest.raises(errors.DataError) as caught:
        core.ingest_binary_stream(data)
    assert caught.value.records == [1]

def test_records_are_sorted_by_timestamp():
    data = struct.pack('<if', 5, 1.0) + struct.pack('<if', -3, 2.0) + struct.pack('<if', 2, 3.0)
    series = core.ingest_binary_stream(data)
    assert series.timestamps.tolist() == [-3, 2, 5]
    assert series.values.tolist() == [2.0, 3.0, 1.0]

def test_binary_round_trip_is_bit_exact(rng):
    values = rng.standard_normal(100).astype(np.float32)
    series = core.TimeSeries(np.arange(100, dtype=np.int64) * 7, values.astype(np.float64), '4', 'acceleration')
    data = core.emit_binary(series)
    assert len(data) == 800
    back = core.ingest_binary_stream(data)
    assert np.array_equal(back.timestamps, series.timestamps)
    assert back.values.astype(np.float32).tobytes() == values.tobytes()
    assert core.emit_binary(back) == data

def test_emit_rejects_timestamps_beyond_four_bytes():
    with pytest.raises(errors.DomainError):
        core.emit_binary(core.TimeSeries(np.array([2 ** 31]), np.array([0.0])))

# -- csv ---------------------------------------------------------------------

HEADER = 'timestamp,sensor_id,channel,value\n'

def test_header_only_is_empty():
    assert core.ingest_csv(HEADER) == {}

def test_rows_are_grouped_and_sorted():
    text = HEADER + '3,s1,acc,0.3\n1,s1,acc,0.1\n2,s1,acc,0.2\n0,s2,temp,20\n'
    series = core.ingest_csv(text)
    assert set(series) == { ('s1', 'acc'), ('s2', 'temp') }
    assert series[('s1', 'acc')].timestamps.tolist() == [1, 2, 3]
    assert series[('s1', 'acc')].values == pytest.approx([0.1, 0.2, 0.3], rel=1e-15)
    assert len(series[('s2', 'temp')]) == 1

def test_missing_column_is_a_schema_error():
    with pytest.raises(errors.SchemaError) as caught:
        core.ingest_csv('timestamp,sensor_id,value\n1,s1,0.5\n')
    assert 'channel' in str(caught.value)

def test_unparseable_row_names_the_line():
    with pytest.raises(errors.SchemaError) as caught:
        core.ingest_csv(HEADER + '1,s1,acc,0.5\n2,s1,acc,abc\n')
    assert caught.value.line == 3

def test_trailing_blank_lines_are_ignored():
    series = core.ingest_csv(HEADER + '1,s1,acc,0.5\n2,s1,acc,0.25\n\n\n')
    assert series[('s1', 'acc')].values.tolist() == [0.5, 0.25]

def test_blank_line_between_rows_names_the_line():
    with pytest.raises(errors.SchemaError) as caught:
        core.ingest_csv(HEADER + '1,s1,acc,0.5\n\n2,s1,acc,0.25\n')
    assert caught.value.line == 3

def test_csv_round_trip():
    series = core.TimeSeries(np.array([0, 1, 2]), np.array([0.1, -2.5, 1e-9]), '0', 'acceleration')
    back = core.ingest_csv(core.emit_csv([ series ]))[('0', 'acceleration')]
    assert back.values == pytest.approx(series.values, rel=1e-15)

# -- frames and windows --------------------------------------------------------

def test_slow_channels_are_forward_filled():
    fast = core.TimeSeries(np.arange(10), np.arange(10, dtype=np.float64), 'a', 'acc')
    slow = core.TimeSeries(np.array([3, 6]), np.array([20.0, 21.0]), 'a', 'temp')
    frame = core.assemble_frame({ ('a', 'acc'): fast, ('a', 'temp'): slow }, 10.0)
    assert frame.channel_names == ('acc', 'temp')
    assert frame.values[0, 1].tolist() == [20.0] * 6 + [21.0] * 4

@pytest.mark.parametrize('length, l, stride, pads', [
    (10, 5, 5, [0, 0]),
    (7, 5, 5, [0, 3]),
    (0, 5, 5, []),
    (7, 5, 1, [0, 0, 0, 1, 2, 3, 4]),
])
def test_window_and_pad(length, l, stride, pads):
    windows = core.window_and_pad(frame_of(np.arange(length)), l, stride)
    assert [ window.pad_count for window in windows ] == pads
    assert all(window.length == l for window in windows)
    assert len(windows) == core.window_count(length, stride)

def test_padding_is_zero():
    windows = core.window_and_pad(frame_of(np.arange(1, 8)), 5, 5)
    assert windows[1].values[0, 0].tolist() == [6.0, 7.0, 0.0, 0.0, 0.0]
    assert windows[1].start_timestamp == 5

def test_unpadded_windows_cover_the_series(rng):
    values = rng.standard_normal((2, 1, 23))
    windows = core.window_and_pad(frame_of(values), 4, 4)
    joined = np.concatenate([ window.values[..., :window.valid_length] for window in windows ], axis=-1)
    assert np.array_equal(joined, values)

def test_window_labels_mark_any_anomalous_sample():
    labels = np.array([0, 0, 0, 0, 1, 0, 0, 0])
    assert core.window_labels(labels, 3, 3) == [0, 1, 0]

def test_features_summarize_auxiliary_channels():
    values = np.zeros((1, 2, 4))
    values[0, 0] = [1, 2, 3, 4]
    values[0, 1] = [10, 20, 30, 40]
    features = core.SignalWindow(0, 1.0, values).features()
    assert features.shape == (1, 8)
    assert features[0] == pytest.approx([1, 2, 3, 4, 25.0, np.std([10, 20, 30, 40]), 10, 40])

def test_window_rejects_non_finite_values():
    with pytest.raises(errors.DataError):
        core.SignalWindow(0, 1.0, np.full((1, 1, 3), np.nan))

# -- splits and normalization ----------------------------------------------------

def test_all_normal_split_80_10_10():
    windows = core.window_and_pad(frame_of(np.arange(50)), 5, 5)
    split, _, _ = core.split_and_normalize(windows, [0] * 10, (0.8, 0.1, 0.1))
    assert (len(split.train), len(split.validation), len(split.test)) == (8, 1, 1)
    assert split.train == tuple(range(8))
    assert not set(split.train) & (set(split.validation) | set(split.test))

def test_training_split_holds_only_normal_windows():
    labels = [0, 1, 0, 0, 1, 0, 0, 1, 0, 0]
    split = core.assign_splits(labels, (0.6, 0.2, 0.2))
    assert all(labels[index] == 0 for index in split.train)
    assert sorted(split.train + split.validation + split.test) == list(range(10))
    assert core.DatasetSplit.from_assignment(split.assignment(), labels) == split

def test_no_normal_windows_is_a_configuration_error():
    windows = core.window_and_pad(frame_of(np.arange(10)), 5, 5)
    with pytest.raises(errors.ConfigurationError):
        core.split_and_normalize(windows, [1, 1])

def test_bad_ratios_are_rejected():
    with pytest.raises(errors.ConfigurationError):
        core.assign_splits([0, 0], (0.5, 0.2, 0.2))

def test_constant_channel_passes_through():
    values = np.full((1, 1, 20), 5.0)
    windows = core.window_and_pad(frame_of(values), 5, 5)
    _, normalizer, normalized = core.split_and_normalize(windows, [0] * 4, (0.5, 0.25, 0.25))
    assert all(np.array_equal(window.values, np.full((1, 1, 5), 5.0)) for window in normalized)
    assert normalizer.std.tolist() == [[0.0]]

def test_z_scores_match_hand_computation():
    values = np.array([1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0])
    windows = core.window_and_pad(frame_of(values), 4, 4)
    split = core.DatasetSplit((0,), (1,), (), (0, 0))
    _, normalizer, normalized = core.split_and_normalize(windows, [0, 0], split=split)
    mean, std = 2.5, np.std([1.0, 2.0, 3.0, 4.0])
    assert normalizer.mean[0, 0] == pytest.approx(mean)
    assert normalized[1].values[0, 0] == pytest.approx((values[4:] - mean) / std)

def test_normalized_training_set_is_standard(rng):
    values = rng.normal(3.0, 2.0, (3, 2, 400))
    windows = core.window_and_pad(frame_of(values), 10, 10)
    split, _, normalized = core.split_and_normalize(windows, [0] * 40)
    train = np.concatenate([ normalized[index].values for index in split.train ], axis=-1)
    assert np.all(np.abs(train.mean(axis=-1)) < 1e-9)
    assert np.all(np.abs(train.std(axis=-1) - 1) < 1e-9)

def test_padding_is_excluded_from_normalization():
    windows = core.window_and_pad(frame_of(np.array([1.0, 3.0, 1.0, 3.0, 1.0, 3.0])), 4, 4)
    _, normalizer, normalized = core.split_and_normalize(windows, [0, 0], split=core.DatasetSplit((0, 1), (), (), (0, 0)))
    assert normalizer.mean[0, 0] == pytest.approx(2.0)
    assert normalized[1].values[0, 0, 2:].tolist() == [0.0, 0.0]

# -- graph ---------------------------------------------------------------------

def test_graph_invariants():
    with pytest.raises(errors.DomainError):
        core.SensorGraph(2, ((0, 2, 1.0),), np.ones(2))
    with pytest.raises(errors.DomainError):
        core.SensorGraph(2, ((0, 1, 1.0), (1, 0, 2.0)), np.ones(2))
    with pytest.raises(errors.DomainError):
        core.SensorGraph(2, (), np.array([1.0, 0.0]))
    with pytest.raises(errors.DomainError):
        core.SensorGraph(2, ((0, 1, float('inf')),), np.ones(2))

def test_fully_connected_edge_count():
    assert core.SensorGraph.fully_connected(64).edge_count == 2016
    assert core.SensorGraph.chain(5).edge_count == 4
