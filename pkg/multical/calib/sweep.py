import itertools
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from multical.calib.calibrators import (calibrate_lsboost, calibrate_mcboost, calibrate_multiaccurate,
                                        calibrate_ours)
from multical.calib.config import get_logger, get_thread_cap
from multical.calib.dataset import CalibrationDataset, split_holdout
from multical.calib.discretize import make_grid
from multical.calib.errors import ConfigError
from multical.calib.metrics import multicalibration_error, squared_loss
from multical.calib.model import BoostConfig, CalibratorKind, SplitSpec, SweepGrid

logger = get_logger(__name__)

LEARNING_RATES = [0.01, 0.0316, 0.1, 0.316, 1.0]
SUBSAMPLES = [round(0.1 * i, 1) for i in range(1, 11)]
LSBOOST_DEPTHS = [1, 2]
LSBOOST_LEARNING_RATES = [0.1, 0.3, 1.0]
HOLDOUT_FRACTIONS = [0.1, 0.2, 0.3, 0.4, 0.5]
LAMBDAS = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2]
TARGET_MS = [10, 20, 30, 50, 75, 100]
FOLD_FRACTION = 0.5
GRID_METHODS = (CalibratorKind.mcboost, CalibratorKind.lsboost)


def default_grid(method: CalibratorKind, target_ms: List[int] = None, folds: int = 10, seed: int = 0) -> SweepGrid:
    grid = SweepGrid(method=method, folds=folds, seed=seed)
    if method == CalibratorKind.ours:
        grid.learning_rates, grid.subsamples = LEARNING_RATES, SUBSAMPLES
    elif method == CalibratorKind.lsboost:
        grid.depths, grid.learning_rates, grid.subsamples = LSBOOST_DEPTHS, LSBOOST_LEARNING_RATES, SUBSAMPLES
    elif method == CalibratorKind.mcboost:
        grid.holdout_fractions = HOLDOUT_FRACTIONS
    else:
        grid.lambdas = LAMBDAS
    if method in GRID_METHODS:
        grid.target_ms = target_ms or TARGET_MS
    return grid


def grid_points(grid: SweepGrid) -> List[dict]:
    if grid.method == CalibratorKind.ours:
        axes = {'learning_rate': grid.learning_rates, 'feature_subsample': grid.subsamples}
    elif grid.method == CalibratorKind.lsboost:
        axes = {'depth': grid.depths, 'learning_rate': grid.learning_rates, 'subsample': grid.subsamples}
    elif grid.method == CalibratorKind.mcboost:
        axes = {'holdout_fraction': grid.holdout_fractions}
    else:
        axes = {'lam': grid.lambdas}
    if any(len(v) == 0 for v in axes.values()):
        raise ConfigError(f'empty grid for {grid.method.value}: {axes}')
    if grid.method in GRID_METHODS and not grid.target_ms:
        raise ConfigError(f'{grid.method.value} sweep needs at least one target m')
    names = list(axes)
    return [dict(zip(names, values)) for values in itertools.product(*axes.values())]


def fold_split(ds: CalibrationDataset, seed: int, fold: int) -> Tuple[CalibrationDataset, CalibrationDataset]:
    return split_holdout(ds, SplitSpec(seed=seed + fold, holdout_fraction=FOLD_FRACTION))


def _fit_predict(method: CalibratorKind, params: dict, cal: CalibrationDataset, val: CalibrationDataset,
                 m: Optional[int], seed: int, base: BoostConfig) -> np.ndarray:
    if method == CalibratorKind.ours:
        model = calibrate_ours(cal, base.copy(update={**params, 'seed': seed}))
    elif method == CalibratorKind.multiaccurate:
        model = calibrate_multiaccurate(cal, params['lam'])
    elif method == CalibratorKind.mcboost:
        model = calibrate_mcboost(cal, make_grid(m), params['holdout_fraction'], seed=seed)
    else:
        model = calibrate_lsboost(cal, make_grid(m), params['depth'], params['learning_rate'], params['subsample'],
                                  seed=seed)
    return model.predict(val.base_scores, val.groups)


def evaluate_point(ds: CalibrationDataset, grid: SweepGrid, params: dict, m: Optional[int],
                   base: BoostConfig) -> float:
    """Mean validation objective over the folds: MC error at m for grid methods, squared loss otherwise."""
    scores = []
    for fold in range(grid.folds):
        cal, val = fold_split(ds, grid.seed, fold)
        pred = _fit_predict(grid.method, params, cal, val, m, grid.seed, base)
        if m is not None:
            scores.append(multicalibration_error(pred, val.groups, val.labels)[0])
        else:
            scores.append(squared_loss(pred, val.labels))
    return float(np.mean(scores))


def objective_name(method: CalibratorKind) -> str:
    return 'mc_error' if method in GRID_METHODS else 'squared_loss'


def run_sweep(ds: CalibrationDataset, grid: SweepGrid, base: BoostConfig = None,
              threads: int = None) -> pd.DataFrame:
    """Score every (grid point, target m) job; rows ranked within each m by objective, then grid order."""
    base = base or BoostConfig()
    points = grid_points(grid)
    ms = grid.target_ms if grid.method in GRID_METHODS else [None]
    jobs = [(i, params, m) for m in ms for i, params in enumerate(points)]
    workers = min(threads or get_thread_cap(), len(jobs))
    logger.info(f'sweeping {len(jobs)} jobs x {grid.folds} folds on {workers} threads')
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(evaluate_point, ds, grid, params, m, base) for _, params, m in jobs]
        objectives = [f.result() for f in futures]

    rows = []
    for (i, params, m), value in zip(jobs, objectives):
        rows.append({'method': grid.method.value, 'm': m, 'point': i, **params,
                     'objective': objective_name(grid.method), 'value': value, 'folds': grid.folds})
    df = pd.DataFrame(rows)
    df['m'] = df['m'].astype('Int64')
    df = df.sort_values(['m', 'value', 'point'], kind='mergesort', na_position='first').reset_index(drop=True)
    df['rank'] = df.groupby('m', dropna=False).cumcount() + 1
    return df


def winners(df: pd.DataFrame, grid: SweepGrid) -> dict:
    """Best grid point per target m (a single entry with m=None for squared-loss methods)."""
    params = [c for c in df.columns if c not in ('method', 'm', 'point', 'objective', 'value', 'folds', 'rank')]
    best = []
    for _, row in df[df['rank'] == 1].iterrows():
        best.append({'m': None if pd.isna(row['m']) else int(row['m']),
                     'params': {p: row[p].item() if hasattr(row[p], 'item') else row[p] for p in params},
                     'value': float(row['value'])})
    return {'method': grid.method.value, 'objective': objective_name(grid.method), 'grid': grid.dict(),
            'winners': best}
