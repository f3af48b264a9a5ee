from typing import Optional, Tuple

import numpy as np

from multical.calib.config import get_logger
from multical.calib.dataset import CalibrationDataset, split_holdout
from multical.calib.errors import DataError, NumericError
from multical.calib.model import (BoostConfig, FitTrace, IterationRecord, Solver, SplitSpec, SquareLevConfig,
                                  StopReason)
from multical.calib.splits import SplitSearcher, TRIVIAL_THRESHOLD
from multical.calib.trees import DepthTwoTree, EnsemblePredictor, SplitPredicate

logger = get_logger(__name__)

CONVERGENCE_TOLERANCE = 1e-14


def _split(ds: CalibrationDataset, cfg: BoostConfig) -> Tuple[CalibrationDataset, Optional[CalibrationDataset]]:
    if ds.n < 2:
        raise DataError(f'need at least 2 rows to fit, got {ds.n}')
    if cfg.holdout_fraction == 0:
        return ds, None
    train, holdout = split_holdout(ds, SplitSpec(seed=cfg.seed, holdout_fraction=cfg.holdout_fraction))
    if holdout.n == 0:
        logger.warning(f'holdout fraction {cfg.holdout_fraction} leaves no holdout rows for n={ds.n}; '
                       f'early stopping is off')
        return train, None
    return train, holdout


def _ensemble(trees, solver: Solver, seed: int, trace: FitTrace) -> EnsemblePredictor:
    return EnsemblePredictor(trees=trees, clamp=True,
                             metadata={'solver': solver.value, 'iterations': len(trees), 'seed': seed,
                                       'stop_reason': trace.stop_reason.value})


def fit_greedy(ds: CalibrationDataset, cfg: BoostConfig = None) -> Tuple[EnsemblePredictor, FitTrace]:
    """Least-squares boosting of depth-two trees on the residuals y - f0.

    Each tree is the exact best split triple over the candidate predicates, leaves are residual
    means times the learning rate. With a holdout the ensemble is cut back to the iteration with
    the lowest holdout loss.
    """
    cfg = cfg or BoostConfig()
    train, holdout = _split(ds, cfg)
    trace = FitTrace(solver=Solver.greedy.value)
    f0 = train.base_scores
    residual = train.labels - f0
    if np.ptp(residual) == 0.0:
        logger.warning(f'residuals are all {residual[0]:.6g}; nothing to fit')
        trace.stop_reason = StopReason.ZERO_VARIANCE
        return _ensemble([], Solver.greedy, cfg.seed, trace), trace

    searcher = SplitSearcher.from_scores(f0, train.groups, cfg.threshold_bins, cfg.tree_family, 2,
                                         cfg.min_leaf_count)
    rng = np.random.default_rng(cfg.seed)
    train_loss = float(np.mean(residual ** 2))
    holdout_offset = np.zeros(holdout.n) if holdout is not None else None
    best_loss = float(np.mean((holdout.labels - holdout.base_scores) ** 2)) if holdout is not None else None
    best_iteration, since_best = 0, 0
    trees = []
    trace.stop_reason = StopReason.MAX_TREES

    for iteration in range(1, cfg.max_trees + 1):
        if not np.any(residual != 0.0):
            trace.stop_reason = StopReason.CONVERGED
            break
        allowed = searcher.subsample(cfg.feature_subsample, rng)
        choice = searcher.best_split(residual, allowed)
        if choice is None:
            trace.stop_reason = StopReason.CONVERGED
            break
        tree, fitted = searcher.fit_tree(choice, f0, residual, cfg.learning_rate)
        new_residual = residual - fitted
        new_loss = float(np.mean(new_residual ** 2))
        if not np.isfinite(new_loss):
            raise NumericError(f'training loss became {new_loss} at iteration {iteration}; lower the learning rate')
        if cfg.feature_subsample >= 1.0 and train_loss - new_loss <= CONVERGENCE_TOLERANCE * train_loss:
            trace.stop_reason = StopReason.CONVERGED
            break
        trees.append(tree)
        residual, train_loss = new_residual, new_loss

        holdout_loss = None
        if holdout is not None:
            holdout_offset += tree.predict(holdout.base_scores, holdout.groups)
            holdout_loss = float(np.mean((holdout.labels - holdout.base_scores - holdout_offset) ** 2))
            if holdout_loss < best_loss:
                best_loss, best_iteration, since_best = holdout_loss, iteration, 0
            else:
                since_best += 1
        else:
            best_iteration = iteration
        trace.add(IterationRecord(iteration=iteration, train_loss=train_loss, holdout_loss=holdout_loss,
                                  split=tree.describe()))
        if holdout is not None and since_best >= cfg.patience:
            trace.stop_reason = StopReason.EARLY_STOPPING
            break

    trace.best_iteration = best_iteration
    logger.info(f'greedy fit stopped ({trace.stop_reason.value}) after {len(trees)} trees; '
                f'keeping {best_iteration}')
    return _ensemble(trees[:best_iteration], Solver.greedy, cfg.seed, trace), trace


def squarelev_step(residuals, hypothesis) -> Tuple[float, float]:
    """Edge (correlation of centered residuals and centered hypothesis) and step size for one round.

    Returns (0, 0) when either side has no variance.
    """
    r = np.asarray(residuals, dtype=float)
    f = np.asarray(hypothesis, dtype=float)
    if r.shape != f.shape:
        raise DataError(f'residuals {r.shape} and hypothesis {f.shape} differ in shape')
    rc = r - r.mean()
    fc = f - f.mean()
    r_norm = float(np.sqrt(rc @ rc))
    f_norm = float(np.sqrt(fc @ fc))
    if r_norm == 0.0 or f_norm == 0.0:
        return 0.0, 0.0
    edge = float(rc @ fc) / (r_norm * f_norm)
    return edge, edge * r_norm / f_norm


def _shift_tree(value: float) -> DepthTwoTree:
    root = SplitPredicate.threshold(TRIVIAL_THRESHOLD)
    return DepthTwoTree(root=root, left=root, right=root, leaves=(value, value, value, value))


def fit_squarelev(ds: CalibrationDataset, cfg: SquareLevConfig = None) -> Tuple[EnsemblePredictor, FitTrace]:
    """Variance-leveraging boosting: each round fits one tree to the centered residuals, then steps
    by edge * |r - mean r| / |f - mean f|, which shrinks the residual variance by (1 - edge^2)."""
    cfg = cfg or SquareLevConfig()
    if ds.n < 2:
        raise DataError(f'need at least 2 rows to fit, got {ds.n}')
    trace = FitTrace(solver=Solver.squarelev.value)
    f0 = ds.base_scores
    residual = ds.labels - f0
    searcher = SplitSearcher.from_scores(f0, ds.groups, cfg.threshold_bins, cfg.tree_family, 2, cfg.min_leaf_count)
    trees = []
    trace.stop_reason = StopReason.T_MAX

    while True:
        centered = residual - residual.mean()
        spread = float(centered @ centered)
        if spread == 0.0:
            trace.stop_reason = StopReason.ZERO_VARIANCE
            break
        if spread < ds.n * cfg.rho:
            trace.stop_reason = StopReason.VARIANCE_FLOOR
            break
        if len(trees) >= cfg.t_max:
            break
        choice = searcher.best_split(centered)
        if choice is None:
            trace.stop_reason = StopReason.ZERO_EDGE
            break
        tree, hypothesis = searcher.fit_tree(choice, f0, centered)
        edge, alpha = squarelev_step(residual, hypothesis)
        if edge == 0.0:
            trace.stop_reason = StopReason.ZERO_EDGE
            break
        if abs(edge) < cfg.epsilon_floor:
            trace.stop_reason = StopReason.EDGE_FLOOR
            break
        variance_before = float(np.var(residual))
        residual = residual - alpha * hypothesis
        trees.append(tree.scaled(alpha))
        trace.add(IterationRecord(iteration=len(trees), train_loss=float(np.mean(residual ** 2)),
                                  split=tree.describe(), edge=edge, alpha=alpha, variance_before=variance_before,
                                  variance_after=float(np.var(residual))))

    if trace.stop_reason == StopReason.ZERO_EDGE:
        logger.warning('base learner returned a constant hypothesis; stopping')
    shift = float(residual.mean())
    trace.best_iteration = len(trees)
    if shift != 0.0:
        trees.append(_shift_tree(shift))
    logger.info(f'squarelev stopped ({trace.stop_reason.value}) after {trace.best_iteration} rounds')
    return _ensemble(trees, Solver.squarelev, cfg.seed, trace), trace
