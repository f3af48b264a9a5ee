from typing import List, Tuple

import numpy as np

from multical.calib.config import get_logger
from multical.calib.dataset import CalibrationDataset
from multical.calib.discretize import Discretizer, nonempty_range_size
from multical.calib.errors import DataError
from multical.calib.model import EvaluationReport

logger = get_logger(__name__)

MAX_RANGE = 10000
DEFAULT_BINS = 10


def _check_lengths(pred: np.ndarray, labels: np.ndarray, groups: np.ndarray = None):
    if len(pred) != len(labels) or len(pred) == 0:
        raise DataError(f'length mismatch: {len(pred)} predictions for {len(labels)} labels')
    if groups is not None and (groups.ndim != 2 or groups.shape[0] != len(pred)):
        raise DataError(f'group matrix shape {groups.shape} does not match {len(pred)} rows')


def squared_loss(pred, labels) -> float:
    pred = np.asarray(pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _check_lengths(pred, labels)
    return float(np.mean((pred - labels) ** 2))


def multicalibration_error(pred_discrete, groups, labels) -> Tuple[float, np.ndarray]:
    """Worst group's mass-weighted sum of per-level mean deviations, plus the per-group vector."""
    pred = np.asarray(pred_discrete, dtype=float)
    labels = np.asarray(labels, dtype=float)
    groups = np.asarray(groups)
    _check_lengths(pred, labels, groups)
    levels, level_idx = np.unique(pred, return_inverse=True)
    if len(levels) > MAX_RANGE:
        raise DataError(f'predictor has {len(levels)} distinct values (limit {MAX_RANGE}); discretize it first')
    n = len(pred)
    diff = pred - labels
    per_group = np.zeros(groups.shape[1])
    for i in range(groups.shape[1]):
        members = groups[:, i] == 1
        if not members.any():
            logger.warning(f'group {i} has no members; contributes 0')
            continue
        # Pr[cell] * |E[diff | cell]| == |sum of diff over cell| / n
        cell_sums = np.bincount(level_idx[members], weights=diff[members], minlength=len(levels))
        per_group[i] = np.abs(cell_sums).sum() / n
    return float(per_group.max()), per_group


def multiaccuracy_error(pred, groups, labels) -> float:
    pred = np.asarray(pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    groups = np.asarray(groups, dtype=float)
    _check_lengths(pred, labels, groups)
    return float(np.max(np.abs(groups.T @ (pred - labels))) / len(pred))


def worst_group_binned_ece(pred, groups, labels, bins: int = DEFAULT_BINS) -> float:
    if bins < 1:
        raise DataError(f'bins must be >= 1, got {bins}')
    pred = np.asarray(pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    groups = np.asarray(groups)
    _check_lengths(pred, labels, groups)
    bin_idx = np.clip(np.floor(pred * bins).astype(int), 0, bins - 1)
    worst = 0.0
    for i in range(groups.shape[1]):
        members = groups[:, i] == 1
        n_g = int(members.sum())
        if n_g == 0:
            continue
        pred_sums = np.bincount(bin_idx[members], weights=pred[members], minlength=bins)
        label_sums = np.bincount(bin_idx[members], weights=labels[members], minlength=bins)
        worst = max(worst, float(np.abs(pred_sums - label_sums).sum() / n_g))
    return worst


def evaluate_predictor(method: str, ds: CalibrationDataset, pred, d: Discretizer = None,
                       bins: int = DEFAULT_BINS, m: int = None) -> EvaluationReport:
    """Metrics for one predictor at one discretization level; `d=None` means pred is already finite-range."""
    pred = np.asarray(pred, dtype=float)
    if d is not None:
        evaluated = d.apply(pred)
        epsilon_round = squared_loss(evaluated, ds.labels) - squared_loss(pred, ds.labels)
        m = d.m
        nonempty = nonempty_range_size(d, pred)
    else:
        evaluated = pred
        epsilon_round = 0.0
        nonempty = int(len(np.unique(pred)))
        m = m if m is not None else nonempty
    mc_error, per_group = multicalibration_error(evaluated, ds.groups, ds.labels)
    return EvaluationReport(method=method, m=m, nonempty_range=nonempty,
                            squared_loss=squared_loss(evaluated, ds.labels), mc_error=mc_error,
                            worst_group_index=int(np.argmax(per_group)), per_group_mc=per_group.tolist(),
                            multiaccuracy_error=multiaccuracy_error(evaluated, ds.groups, ds.labels),
                            worst_group_binned_ece=worst_group_binned_ece(evaluated, ds.groups, ds.labels, bins),
                            bins=bins, epsilon_round=epsilon_round, empty_groups=ds.empty_groups)


def group_summary(ds: CalibrationDataset) -> List[dict]:
    counts = ds.groups.sum(axis=0)
    return [{'group': name, 'members': int(c), 'rate': float(c / ds.n)} for name, c in zip(ds.group_names, counts)]
