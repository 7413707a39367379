import json

import numpy as np
import pytest

from mode_monitor import core
from mode_monitor import errors
from mode_monitor import spectral

def test_covariance_of_a_zero_signal():
    C = spectral.covariance(np.zeros((2, 5))).C
    assert np.array_equal(C, np.zeros((2, 2, 5)))

def test_covariance_by_expectation():
    up = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    C = spectral.covariance(np.stack([up, up, up[::-1]]), [0]).C
    assert C[0, 1, 0] == pytest.approx(2.0)
    assert C[0, 2, 0] == pytest.approx(-2.0)

def test_covariance_uses_the_overlap_count():
    x = np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
    C = spectral.covariance(x, [1]).C
    # centered -2 -1 0 1 2, products over the 4 overlapping samples
    assert C[0, 0, 0] == pytest.approx((2 + 0 + 0 + 2) / 4)

def test_covariance_excludes_padding():
    values = np.zeros((1, 1, 6))
    values[0, 0, :4] = [1.0, 2.0, 3.0, 4.0]
    padded = core.SignalWindow(0, 1.0, values, pad_count=2)
    bare = spectral.covariance(np.array([[1.0, 2.0, 3.0, 4.0]]), [0, 1])
    assert np.allclose(spectral.covariance(padded, [0, 1]).C, bare.C)

def test_lag_out_of_range_is_a_domain_error():
    with pytest.raises(errors.DomainError):
        spectral.covariance(np.zeros((1, 5)), [5])
    with pytest.raises(errors.DomainError):
        spectral.covariance(np.zeros((1, 1)))

def test_correlation_of_identical_negated_and_constant_signals(rng):
    x = rng.standard_normal(32)
    R = spectral.correlate(np.stack([x, x, -x, np.full(32, 3.0)]), [0]).R[:, :, 0]
    assert R[0, 1] == pytest.approx(1.0)
    assert R[0, 2] == pytest.approx(-1.0)
    assert R[0, 3] == 0.0
    assert R[3, 3] == 0.0

def test_cross_correlation_normalizes_by_the_zero_lag_variances():
    C = np.zeros((3, 3, 2))
    C[:, :, 0] = [[4.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
    C[:, :, 1] = [[2.0, 0.5, 0.0], [-0.5, 0.25, 0.0], [0.0, 0.0, 0.0]]
    correlations = spectral.cross_correlation(spectral.CorrelationSet(np.array([0, 1]), C, np.array([4.0, 1.0, 0.0])))
    assert correlations.R[0, 1].tolist() == [0.5, 0.25]
    assert correlations.R[1, 0].tolist() == [0.5, -0.25]
    assert correlations.R[0, 0].tolist() == [1.0, 0.5]
    assert not np.any(correlations.R[2])
    assert not np.any(correlations.R[:, 2])

def test_correlation_bounds_and_cauchy_schwarz(rng):
    signals = rng.standard_normal((5, 40))
    correlations = spectral.correlate(signals)
    assert np.all(np.abs(correlations.R) <= 1 + 1e-12)
    assert np.allclose(np.diagonal(correlations.R[:, :, 0]), 1.0)
    C0 = correlations.C[:, :, 0]
    variance = np.diagonal(C0)
    assert np.all(np.abs(C0) <= np.sqrt(np.outer(variance, variance)) + 1e-12)
    assert np.allclose(C0, C0.T)

def test_correlation_is_scale_invariant(rng):
    signals = rng.standard_normal((3, 20))
    scaled = signals * np.array([[2.0], [0.01], [300.0]])
    R, R_scaled = spectral.correlate(signals).R, spectral.correlate(scaled).R
    assert np.allclose(R, R_scaled, atol=1e-10)
    assert np.allclose(spectral.edge_weights_from_correlation(R), spectral.edge_weights_from_correlation(R_scaled), atol=1e-10)

def test_psd_of_zero_and_impulse():
    lags = np.arange(8)
    assert np.array_equal(spectral.psd(np.zeros((2, 2, 8)), lags, 100.0).S, np.zeros((2, 2, 8)))
    impulse = np.zeros((1, 1, 8))
    impulse[0, 0, 0] = 1.0
    spectrum = spectral.psd(impulse, lags, 100.0)
    assert np.allclose(spectrum.S[0, 0], 1.0)
    assert spectrum.frequencies[0] == 0.0
    assert spectrum.frequencies[-1] == 50.0

def test_psd_peaks_at_the_cosine_bin():
    l, fs = 64, 128.0
    lags = np.arange(l)
    frequencies = np.linspace(0.0, fs / 2, l)
    f0 = frequencies[10]
    R = np.cos(2 * np.pi * f0 * lags / fs).reshape(1, 1, l)
    spectrum = spectral.psd(R, lags, fs)
    assert int(np.argmax(np.abs(spectrum.S[0, 0]))) == 10

def test_psd_is_hermitian_per_bin(rng):
    R = spectral.correlate(rng.standard_normal((4, 16))).R
    S = spectral.psd(R, np.arange(16), 50.0).S
    assert np.allclose(S, np.conj(np.transpose(S, (1, 0, 2))), atol=1e-9)

def test_empty_lag_grid_is_a_domain_error():
    with pytest.raises(errors.DomainError):
        spectral.psd(np.zeros((1, 1, 0)), [], 10.0)

def test_inverse_relation_recovers_the_autocorrelation():
    t = np.arange(16)
    signals = np.stack([np.sin(0.7 * t) + 0.3 * np.cos(2.1 * t), np.sign(np.sin(0.4 * t + 0.1))])
    correlations = spectral.correlate(signals)
    spectrum = spectral.psd(correlations.R, correlations.lags, 64.0)
    recovered = spectral.recover_autocorrelation(spectrum, correlations.lags, 64.0)
    expected = np.stack([ correlations.R[i, i] for i in range(2) ])
    assert np.allclose(recovered, expected, atol=1e-8)

def test_white_noise_spectrum_is_flat():
    rng = np.random.default_rng(7)
    lags = np.arange(8)
    total = np.zeros(8)
    for _ in range(2000):
        R = spectral.correlate(rng.standard_normal((1, 256)), lags).R
        total += np.real(spectral.psd(R, lags, 256.0).S[0, 0])
    mean = total / 2000
    # the zero-frequency bin carries the mean-removal bias
    bins = mean[1:]
    assert (bins.max() - bins.min()) / bins.mean() < 0.1

def test_edge_weights_of_identical_and_orthogonal_signals():
    t = np.arange(16)
    same = np.stack([np.sin(2 * np.pi * t / 16)] * 3)
    assert np.allclose(spectral.edge_weights_from_correlation(spectral.correlate(same, [0]).R), 1.0)
    orthogonal = np.stack([np.sin(2 * np.pi * t / 16), np.cos(2 * np.pi * t / 16)])
    weights = spectral.edge_weights_from_correlation(spectral.correlate(orthogonal, [0]).R)
    assert weights[0, 1] == pytest.approx(0.0, abs=1e-12)
    assert weights[0, 0] == 1.0

def test_reweight_replaces_rather_than_accumulates(rng):
    graph = core.SensorGraph.chain(3)
    first = spectral.reweight(graph, spectral.correlate(rng.standard_normal((3, 30))).R)
    R = spectral.correlate(rng.standard_normal((3, 30))).R
    second = spectral.reweight(first, R)
    assert [ weight for _, _, weight in second.edges ] == pytest.approx([abs(R[0, 1, 0]), abs(R[1, 2, 0])])

def test_debug_dump(tmp_path, rng):
    correlations = spectral.correlate(rng.standard_normal((2, 8)))
    path = str(tmp_path / 'dump.json')
    spectral.dump_debug(path, correlations, spectral.psd(correlations.R, correlations.lags, 8.0))
    with open(path) as fp:
        content = json.load(fp)
    assert set(content) == { 'lags', 'C', 'R', 'frequencies', 'S' }
    assert content['S']['shape'] == [2, 2, 8]

# -- spectral shape --------------------------------------------------------------

def test_log_spectrum_shape_and_peak():
    t = np.arange(64) / 64.0
    signals = np.stack([np.sin(2 * np.pi * 16.0 * t), np.cos(2 * np.pi * 16.0 * t), np.sin(2 * np.pi * 16.0 * t + 1.0)])
    shape = spectral.log_spectrum(signals, 64.0)
    assert shape.shape == (3, 64 // 4 + 1)
    # Welch segments of 32 samples give 2 Hz bins
    assert np.argmax(shape, axis=-1).tolist() == [8, 8, 8]

def test_log_spectrum_ignores_the_signal_level(rng):
    signals = rng.standard_normal((2, 128))
    assert np.allclose(spectral.log_spectrum(signals), spectral.log_spectrum(250.0 * signals))

def test_log_spectrum_of_a_window_uses_its_sample_rate(rng):
    values = rng.standard_normal((2, 3, 32))
    window = core.SignalWindow(0, 100.0, values)
    assert np.allclose(spectral.log_spectrum(window), spectral.log_spectrum(values[:, 0, :], 100.0))

def test_log_spectrum_of_silence_is_finite():
    shape = spectral.log_spectrum(np.zeros((2, 16)))
    assert np.all(np.isfinite(shape))
    assert np.all(shape == np.log(spectral.POWER_FLOOR))

def test_log_spectrum_needs_four_samples():
    with pytest.raises(errors.DomainError):
        spectral.log_spectrum(np.zeros((1, 3)))
