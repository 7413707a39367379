#! env python3

"""Signal block: pairwise covariance, normalized cross-correlation and the cross power spectral
density obtained from the correlation by the Wiener-Khinchin relation."""

from __future__ import annotations

import dataclasses
import logging
import os
import typing

import numpy as np
import scipy.signal

from . import core
from . import errors
from . import formats

log = logging.getLogger(__name__)

DEGENERATE_VARIANCE = 1e-12
POWER_FLOOR = 1e-12

@dataclasses.dataclass(frozen=True, eq=False)
class CorrelationSet:
    lags: np.ndarray
    C: np.ndarray
    autocovariance: np.ndarray
    R: None|np.ndarray = None

@dataclasses.dataclass(frozen=True, eq=False)
class SpectralEstimate:
    frequencies: np.ndarray
    S: np.ndarray

    def trace(self) -> np.ndarray:
        """Sum of the auto-spectra per bin"""
        return np.einsum('iif->f', self.S)

def default_lags(l: int) -> np.ndarray:
    return np.arange(l)

def _signal_of(window: core.SignalWindow|np.ndarray) -> typing.Tuple[np.ndarray, int, int]:
    if isinstance(window, core.SignalWindow):
        return window.signal(), window.length, window.valid_length
    signal = np.atleast_2d(np.asarray(window, dtype=np.float64))
    return signal, signal.shape[-1], signal.shape[-1]

def covariance(window: core.SignalWindow|np.ndarray, lags: None|typing.Sequence[int] = None) -> CorrelationSet:
    """C_ij(tau) = mean_t (x_i(t) - mu_i)(x_j(t + tau) - mu_j), divided by the overlap count.
    Accepts a window (first channel is used, padding excluded) or an [n x l] array."""
    signal, l, valid = _signal_of(window)
    if l < 2:
        raise errors.DomainError(f"window length must be >= 2 for covariance, got {l}")
    lags = default_lags(l) if lags is None else np.asarray(lags, dtype=np.int64)
    if lags.size == 0:
        raise errors.DomainError("empty lag grid")
    if lags.min() < 0 or lags.max() >= l:
        raise errors.DomainError(f"lags must lie in [0, {l - 1}], got {lags.tolist()}")
    centered = signal[:, :valid] - signal[:, :valid].mean(axis=1, keepdims=True)
    n = signal.shape[0]
    C = np.zeros((n, n, lags.size))
    for k, tau in enumerate(lags):
        overlap = valid - tau
        if overlap > 0:
            C[:, :, k] = centered[:, :overlap] @ centered[:, tau:].T / overlap
    zero = np.flatnonzero(lags == 0)
    autocovariance = np.diagonal(C[:, :, zero[0]]).copy() if zero.size else np.mean(centered ** 2, axis=1)
    return CorrelationSet(lags, C, autocovariance)

def cross_correlation(correlations: CorrelationSet) -> CorrelationSet:
    """R_ij(tau) = C_ij(tau) / sqrt(C_ii(0) C_jj(0)); zero wherever either signal is degenerate"""
    variance = correlations.autocovariance
    live = variance >= DEGENERATE_VARIANCE
    scale = np.sqrt(np.where(live, variance, 1.0))
    R = correlations.C / (scale[:, None, None] * scale[None, :, None])
    R[~live, :, :] = 0.0
    R[:, ~live, :] = 0.0
    np.clip(R, -1.0, 1.0, out=R)
    return dataclasses.replace(correlations, R=R)

def correlate(window: core.SignalWindow|np.ndarray, lags: None|typing.Sequence[int] = None) -> CorrelationSet:
    return cross_correlation(covariance(window, lags))

def mirror_lags(R: np.ndarray, lags: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Extend a non-negative lag grid to negative lags using R_ij(-tau) = R_ji(tau)"""
    positive = lags > 0
    negative_lags = -lags[positive][::-1]
    negative_R = np.transpose(R[:, :, positive], (1, 0, 2))[:, :, ::-1]
    return np.concatenate([negative_lags, lags]), np.concatenate([negative_R, R], axis=2)

def psd(R: np.ndarray, lags: typing.Sequence[int], sample_rate: float, bin_count: None|int = None) -> SpectralEstimate:
    """S_ij(f) = sum over the symmetric lag grid of R_ij(tau) exp(-2 pi i f tau / fs),
    on a one-sided grid of bins from 0 to fs/2"""
    lags = np.asarray(lags, dtype=np.int64)
    if lags.size == 0:
        raise errors.DomainError("empty lag grid")
    if lags.min() < 0 or np.unique(lags).size != lags.size:
        raise errors.DomainError(f"lag grid must be distinct non-negative lags, got {lags.tolist()}")
    if sample_rate <= 0:
        raise errors.DomainError(f"sample rate must be positive, got {sample_rate}")
    bin_count = lags.size if bin_count is None else bin_count
    frequencies = np.linspace(0.0, sample_rate / 2.0, bin_count)
    all_lags, all_R = mirror_lags(np.asarray(R, dtype=np.float64), lags)
    kernel = np.exp(-2j * np.pi * np.outer(all_lags, frequencies) / sample_rate)
    return SpectralEstimate(frequencies, all_R @ kernel)

def recover_autocorrelation(spectrum: SpectralEstimate, lags: typing.Sequence[int], sample_rate: float) -> np.ndarray:
    """Invert the relation for the auto-spectra: least squares on the cosine basis, returns [n x |lags|]"""
    lags = np.asarray(lags, dtype=np.int64)
    basis = np.cos(2 * np.pi * np.outer(spectrum.frequencies, lags) / sample_rate)
    basis[:, lags > 0] *= 2.0
    auto = np.real(np.einsum('iif->if', spectrum.S))
    solution, *_ = np.linalg.lstsq(basis, auto.T, rcond=None)
    return solution.T

def edge_weights_from_correlation(R: np.ndarray) -> np.ndarray:
    """weight(i, j) = |R_ij(0)|, self-loops 1; R is either [n x n] at lag 0 or the lag tensor"""
    R = np.asarray(R)
    weights = np.abs(R[:, :, 0] if R.ndim == 3 else R).copy()
    np.fill_diagonal(weights, 1.0)
    return weights

def reweight(graph: core.SensorGraph, R: np.ndarray) -> core.SensorGraph:
    """Graph with edge weights replaced from the current correlation"""
    return graph.with_weights(edge_weights_from_correlation(R))

def log_spectrum(window: core.SignalWindow|np.ndarray, sample_rate: float = 1.0) -> np.ndarray:
    """Per-node log spectral shape [n x (l // 4 + 1)]: the Welch PSD over half-window Hann segments,
    divided by the node's total power so the features do not follow the excitation level"""
    if isinstance(window, core.SignalWindow):
        signal, sample_rate = window.signal(), window.sample_rate
    else:
        signal = np.atleast_2d(np.asarray(window, dtype=np.float64))
    l = signal.shape[-1]
    if l < 4:
        raise errors.DomainError(f"window length must be >= 4 for a spectrum, got {l}")
    _, power = scipy.signal.welch(signal, fs=sample_rate, nperseg=l // 2, axis=-1)
    total = np.maximum(power.sum(axis=-1, keepdims=True), POWER_FLOOR)
    return np.log(np.maximum(power / total, POWER_FLOOR))

def dump_debug(path: str, correlations: CorrelationSet, spectrum: None|SpectralEstimate = None):
    content: typing.Dict[str, typing.Any] = dict(lags=correlations.lags, C=correlations.C, R=correlations.R)
    if spectrum is not None:
        content.update(frequencies=spectrum.frequencies, S=spectrum.S)
    with open(f"{path}.next", 'wt') as fp:
        fp.write(formats.dumps(content))
    os.replace(f"{path}.next", path)
    log.debug(f"DUMP correlation of {correlations.C.shape[0]} signals to {path}")
