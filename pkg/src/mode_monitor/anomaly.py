#! env python3

from __future__ import annotations

import dataclasses
import logging
import math
import os
import typing

import numpy as np
import pandas as pd
import scipy.linalg
from sklearn import metrics as skmetrics

from . import errors
from . import formats

log = logging.getLogger(__name__)

THRESHOLD_KINDS = ('l1', 'mahalanobis')
# covariance regularization relative to the mean variance
REGULARIZATION = 1e-6

@dataclasses.dataclass(frozen=True, eq=False)
class ThresholdModel:
    kind: str
    threshold: float
    percentile: float
    mean: None|np.ndarray = None
    covariance: None|np.ndarray = None

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise errors.DomainError(f"threshold must be finite, got {self.threshold}")
        if not 0 < self.percentile < 1:
            raise errors.DomainError(f"percentile must lie in (0, 1), got {self.percentile}")

    def score(self, residuals: np.ndarray) -> np.ndarray:
        """Per-window score of flattened residuals [N x D]"""
        if self.kind == 'l1':
            return l1_scores(residuals)
        return mahalanobis_distance(residuals, self.mean, self.covariance)

    def report(self) -> typing.Dict[str, typing.Any]:
        return dict(kind=self.kind, threshold=self.threshold, percentile=self.percentile)

@dataclasses.dataclass(frozen=True, eq=False)
class AnomalyReport:
    scores: np.ndarray
    flags: np.ndarray
    truth: np.ndarray
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    balanced_accuracy: float
    auc: float
    note: str = ''

    def summary(self) -> typing.Dict[str, typing.Any]:
        return dict(
            windows=int(self.scores.shape[0]), tp=self.tp, fp=self.fp, tn=self.tn, fn=self.fn,
            precision=self.precision, recall=self.recall, f1=self.f1,
            balanced_accuracy=self.balanced_accuracy, auc=self.auc, note=self.note)

def l1_scores(residuals: np.ndarray) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=np.float64)
    return np.abs(residuals.reshape(residuals.shape[0], -1)).sum(axis=1)

def fit_l1(train_errors: typing.Sequence[float], percentile: float = 0.95) -> ThresholdModel:
    """Threshold at the q-quantile of training L1 errors, interpolating linearly between order statistics"""
    train_errors = np.asarray(train_errors, dtype=np.float64)
    if train_errors.size == 0:
        raise errors.DomainError("cannot fit a threshold to no training errors")
    return ThresholdModel('l1', float(np.quantile(train_errors, percentile)), percentile)

def mahalanobis_distance(residuals: np.ndarray, mean: np.ndarray, covariance: np.ndarray) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=np.float64).reshape(np.shape(residuals)[0], -1)
    try:
        factor = scipy.linalg.cho_factor(covariance, lower=True)
    except np.linalg.LinAlgError as e:
        raise errors.NumericError(f"covariance is not positive definite: {e}")
    centered = residuals - mean
    solved = scipy.linalg.cho_solve(factor, centered.T).T
    return np.sqrt(np.clip(np.sum(centered * solved, axis=1), 0.0, None))

def fit_mahalanobis(train_residuals: np.ndarray, percentile: float = 0.95) -> ThresholdModel:
    """Mean and covariance of training residual vectors, ridge lambda = 1e-6 trace/dim, threshold at the q-quantile of training distances"""
    train_residuals = np.asarray(train_residuals, dtype=np.float64)
    if train_residuals.ndim != 2 or train_residuals.shape[0] < 2:
        raise errors.DomainError(f"need at least 2 residual vectors, got shape {train_residuals.shape}")
    mean = train_residuals.mean(axis=0)
    covariance = np.atleast_2d(np.cov(train_residuals, rowvar=False))
    dim = covariance.shape[0]
    ridge = REGULARIZATION * np.trace(covariance) / dim
    covariance = covariance + (ridge if ridge > 0 else np.finfo(np.float64).tiny ** 0.5) * np.eye(dim)
    distances = mahalanobis_distance(train_residuals, mean, covariance)
    return ThresholdModel('mahalanobis', float(np.quantile(distances, percentile)), percentile, mean, covariance)

def fit_threshold(kind: str, train_residuals: np.ndarray, percentile: float = 0.95) -> ThresholdModel:
    if kind == 'l1':
        return fit_l1(l1_scores(train_residuals), percentile)
    if kind == 'mahalanobis':
        return fit_mahalanobis(train_residuals, percentile)
    raise errors.ConfigurationError('threshold', f"{kind!r} is not one of {THRESHOLD_KINDS}")

def classify(scores: typing.Sequence[float], model: ThresholdModel) -> np.ndarray:
    """Flag every score strictly above the threshold"""
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise errors.DomainError("scores must be finite")
    return scores > model.threshold

def metrics(flags: typing.Sequence[bool], truth: typing.Sequence[int], scores: typing.Sequence[float]) -> AnomalyReport:
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if not flags.shape == truth.shape == scores.shape:
        raise errors.DomainError(f"lengths differ: flags {flags.shape}, truth {truth.shape}, scores {scores.shape}")
    predicted = flags.astype(np.int64)
    tn, fp, fn, tp = (int(count) for count in skmetrics.confusion_matrix(truth, predicted, labels=[0, 1]).ravel())
    precision = float(skmetrics.precision_score(truth, predicted, labels=[0, 1], zero_division=0))
    recall = float(skmetrics.recall_score(truth, predicted, labels=[0, 1], zero_division=0))
    f1 = float(skmetrics.f1_score(truth, predicted, labels=[0, 1], zero_division=0))
    specificity = tn / (tn + fp) if tn + fp else None
    balanced = np.mean([ rate for rate in (recall if tp + fn else None, specificity) if rate is not None ]) if truth.size else 0.0
    note = ''
    if 0 < truth.sum() < truth.size:
        fpr, tpr, _ = skmetrics.roc_curve(truth, scores)
        auc = float(skmetrics.auc(fpr, tpr))
    else:
        note = 'single class in ground truth, AUC undefined'
        log.warning(f"{note}; reporting 0.5")
        auc = 0.5
    return AnomalyReport(scores, flags, truth, tp, fp, tn, fn, precision, recall, f1, float(balanced), auc, note)

def write_report(
    report: AnomalyReport,
    model: ThresholdModel,
    json_path: str,
    csv_path: None|str = None,
    extra: None|typing.Mapping[str, typing.Any] = None,
    windows: None|typing.Sequence[int] = None,
    columns: None|typing.Mapping[str, typing.Sequence[float]] = None
):
    """JSON with per-window scores (and any further per-window `columns`) plus a one-row CSV of the summary"""
    content: typing.Dict[str, typing.Any] = dict(extra or {})
    content.update(threshold=model.report(), metrics=report.summary())
    content.update(
        windows=list(windows) if windows is not None else list(range(report.scores.shape[0])),
        scores=report.scores.tolist(), flags=report.flags.astype(int).tolist(), truth=report.truth.tolist())
    content.update({ name: np.asarray(values, dtype=np.float64).tolist() for name, values in (columns or {}).items() })
    try:
        with open(f"{json_path}.next", 'wt') as fp:
            fp.write(formats.dumps(content))
        os.replace(f"{json_path}.next", json_path)
        if csv_path is not None:
            row = dict(extra or {})
            row.update(kind=model.kind, threshold=model.threshold, **report.summary())
            pd.DataFrame([ row ]).to_csv(csv_path, index=False, float_format='%.17g')
    except OSError as e:
        raise errors.ConfigurationError(e.filename or json_path, f"cannot write report: {e.strerror}")
