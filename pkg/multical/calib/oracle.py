"""Brute-force references for small instances: exact per-level-set least squares, the worst-group
correction patch, and a loop-by-loop multicalibration error."""
from typing import Tuple

import numpy as np

from multical.calib.dataset import CalibrationDataset
from multical.calib.errors import DataError
from multical.calib.metrics import multicalibration_error
from multical.calib.trees import LevelSetPatch

MAX_EXHAUSTIVE_ROWS = 10000


def _check_base(ds: CalibrationDataset, base) -> np.ndarray:
    base = np.asarray(base, dtype=float)
    if base.shape != (ds.n,):
        raise DataError(f'base has shape {base.shape}, expected ({ds.n},)')
    return base


def optimal_patch_loss(ds: CalibrationDataset, base_discrete) -> Tuple[float, LevelSetPatch]:
    """Lowest squared loss of base + (per-level affine function of g), and the patch attaining it."""
    base = _check_base(ds, base_discrete)
    levels = np.unique(base)
    patch = LevelSetPatch.zeros(levels, ds.k)
    sse = 0.0
    for j, v in enumerate(levels):
        rows = base == v
        x = np.column_stack([np.ones(int(rows.sum())), ds.groups[rows]])
        t = ds.labels[rows] - v
        # minimum-norm solution when some group columns are constant or collinear inside the level set
        coef = np.linalg.pinv(x.T @ x) @ (x.T @ t)
        resid = t - x @ coef
        sse += float(resid @ resid)
        patch.intercepts[j] = float(coef[0])
        patch.coefs[j] = [float(c) for c in coef[1:]]
    return sse / ds.n, patch


def lemma3_patch(ds: CalibrationDataset, pred_discrete) -> Tuple[LevelSetPatch, float]:
    """Shift every level set of the worst group by its mean label gap; returns the patch and loss drop."""
    pred = _check_base(ds, pred_discrete)
    levels = np.unique(pred)
    patch = LevelSetPatch.zeros(levels, ds.k)
    mc, per_group = multicalibration_error(pred, ds.groups, ds.labels)
    if mc == 0.0:
        return patch, 0.0
    worst = int(np.argmax(per_group))
    members = ds.groups[:, worst] == 1
    reduction = 0.0
    for j, v in enumerate(levels):
        rows = members & (pred == v)
        if not rows.any():
            continue
        alpha = -float(np.mean(pred[rows] - ds.labels[rows]))
        patch.coefs[j][worst] = alpha
        reduction += rows.sum() * alpha * alpha
    return patch, float(reduction / ds.n)


def exhaustive_mc_error(pred_discrete, groups, labels) -> float:
    pred = [float(v) for v in pred_discrete]
    labels = [float(v) for v in labels]
    groups = np.asarray(groups).tolist()
    n = len(pred)
    if n > MAX_EXHAUSTIVE_ROWS:
        raise DataError(f'{n} rows is too many for exhaustive enumeration (limit {MAX_EXHAUSTIVE_ROWS})')
    if n == 0 or len(labels) != n or len(groups) != n:
        raise DataError('predictions, labels and groups must have the same nonzero length')
    worst = 0.0
    for i in range(len(groups[0])):
        total = 0.0
        for v in sorted(set(pred)):
            count, gap = 0, 0.0
            for r in range(n):
                if pred[r] == v and groups[r][i] == 1:
                    count += 1
                    gap += pred[r] - labels[r]
            if count:
                total += (count / n) * abs(gap / count)
        worst = max(worst, total)
    return worst
