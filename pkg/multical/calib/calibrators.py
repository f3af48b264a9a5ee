from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from multical.calib.boost import fit_greedy, fit_squarelev
from multical.calib.config import get_logger
from multical.calib.dataset import CalibrationDataset, split_holdout
from multical.calib.discretize import Discretizer
from multical.calib.errors import ConfigError, DataError
from multical.calib.metrics import multicalibration_error, squared_loss
from multical.calib.model import (BoostConfig, CalibratorKind, FitTrace, IterationRecord, SplitSpec,
                                  SquareLevConfig, StopReason, TreeFamily)
from multical.calib.splits import SplitSearcher
from multical.calib.trees import DepthTwoTree, EnsemblePredictor

logger = get_logger(__name__)

LASSO_TOLERANCE = 1e-10
LASSO_MAX_SWEEPS = 10000


class PatchRecord(BaseModel):
    group: int
    level: float
    value: float


class PatchTable(BaseModel):
    """Cell overwrites applied in order on top of d(f0)."""
    records: List[PatchRecord] = []

    def predict(self, f0, groups, d: Discretizer) -> np.ndarray:
        p = d.apply(f0)
        for rec in self.records:
            p[(groups[:, rec.group] == 1) & (p == rec.level)] = rec.value
        return p


class LinearModel(BaseModel):
    intercept: float
    weights: List[float]
    lam: float = Field(..., ge=0.0)

    def predict(self, f0, groups) -> np.ndarray:
        return np.clip(f0 + self.intercept + groups @ np.asarray(self.weights, dtype=float), 0.0, 1.0)


class LevelLearner(BaseModel):
    level: float
    tree: DepthTwoTree


class LevelSetBoostModel(BaseModel):
    learning_rate: float
    rounds: List[List[LevelLearner]] = []

    def predict(self, f0, groups, d: Discretizer) -> np.ndarray:
        p = d.apply(f0)
        for learners in self.rounds:
            p = _level_set_step(p, groups, learners, self.learning_rate, d)
        return p


def _level_set_step(p: np.ndarray, groups: np.ndarray, learners: List[LevelLearner], lr: float,
                    d: Discretizer) -> np.ndarray:
    new = p.copy()
    for learner in learners:
        rows = p == learner.level
        if rows.any():
            h = learner.tree.predict(np.zeros(int(rows.sum())), groups[rows])
            new[rows] = d.apply(learner.level + lr * (h - learner.level))
    return new


class CalibratedModel(BaseModel):
    kind: CalibratorKind
    num_groups: int
    payload: Any
    discretizer: Optional[Discretizer] = None
    config: Dict[str, Any] = {}
    trace: Optional[FitTrace] = None

    class Config:
        arbitrary_types_allowed = True

    def predict(self, f0, groups) -> np.ndarray:
        f0 = np.atleast_1d(np.asarray(f0, dtype=float))
        groups = np.asarray(groups, dtype=float)
        if groups.ndim == 1:
            groups = groups.reshape(1, -1) if len(f0) == 1 else groups.reshape(-1, 1)
        if groups.shape != (len(f0), self.num_groups):
            raise DataError(f'model expects {self.num_groups} groups for {len(f0)} rows, got shape {groups.shape}')
        if self.kind in (CalibratorKind.mcboost, CalibratorKind.lsboost):
            if self.discretizer is None:
                raise ConfigError(f'{self.kind.value} model has no discretizer')
            return self.payload.predict(f0, groups, self.discretizer)
        return self.payload.predict(f0, groups)


def predict(model: CalibratedModel, f0: float, g) -> float:
    return float(model.predict(f0, g)[0])


def calibrate_ours(ds: CalibrationDataset, cfg: Union[BoostConfig, SquareLevConfig] = None) -> CalibratedModel:
    """Post-process f0 with a depth-two tree ensemble fit to y - f0 on (f0, g); no discretization."""
    cfg = cfg or BoostConfig()
    if isinstance(cfg, SquareLevConfig):
        ensemble, trace = fit_squarelev(ds, cfg)
    else:
        ensemble, trace = fit_greedy(ds, cfg)
    return CalibratedModel(kind=CalibratorKind.ours, num_groups=ds.k, payload=ensemble, config=cfg.dict(),
                           trace=trace)


def _require_discretizer(d: Optional[Discretizer], method: str):
    if d is None:
        raise ConfigError(f'{method} requires a discretizer')


def _holdout_split(ds: CalibrationDataset, fraction: float,
                   seed: int) -> Tuple[CalibrationDataset, Optional[CalibrationDataset]]:
    if ds.n < 2:
        raise DataError(f'need at least 2 rows to fit, got {ds.n}')
    train, holdout = split_holdout(ds, SplitSpec(seed=seed, holdout_fraction=fraction))
    if holdout.n == 0:
        logger.warning(f'no holdout rows at fraction {fraction} for n={ds.n}; early stopping is off')
        return train, None
    return train, holdout


def _best_cell(p: np.ndarray, groups: np.ndarray, labels: np.ndarray, d: Discretizer):
    """Cell with the largest mass-weighted deviation among those whose overwrite lowers squared loss."""
    levels, idx = np.unique(p, return_inverse=True)
    diff = p - labels
    n = len(p)
    best = None
    for i in range(groups.shape[1]):
        members = groups[:, i] == 1
        counts = np.bincount(idx[members], minlength=len(levels))
        if not counts.any():
            continue
        y_sums = np.bincount(idx[members], weights=labels[members], minlength=len(levels))
        dev_sums = np.bincount(idx[members], weights=diff[members], minlength=len(levels))
        nonzero = counts > 0
        means = np.where(nonzero, y_sums / np.maximum(counts, 1), levels)
        targets = d.apply(means)
        eligible = nonzero & (np.abs(targets - means) < np.abs(levels - means))
        scores = np.where(eligible, np.abs(dev_sums) / n, -np.inf)
        j = int(np.argmax(scores))
        if np.isfinite(scores[j]) and (best is None or scores[j] > best[0]):
            best = (float(scores[j]), i, float(levels[j]), float(targets[j]))
    return best


def calibrate_mcboost(ds: CalibrationDataset, d: Discretizer, holdout_fraction: float = 0.3,
                      max_rounds: int = 1000, seed: int = 0) -> CalibratedModel:
    """Repeatedly overwrite the worst (group, level) cell with its label mean, re-discretized by d.

    Stops when no cell can be improved, after max_rounds, or once the holdout multicalibration
    error has gone one full pass over the cells without improving; keeps the best holdout prefix.
    """
    _require_discretizer(d, 'mcboost')
    train, holdout = _holdout_split(ds, holdout_fraction, seed)
    p_train = d.apply(train.base_scores)
    p_hold = d.apply(holdout.base_scores) if holdout is not None else None
    n_levels = len(np.unique(p_train))
    full_pass = max(1, int(np.count_nonzero(train.groups.sum(axis=0))) * n_levels)
    best_err = multicalibration_error(p_hold, holdout.groups, holdout.labels)[0] if holdout is not None else None
    best_len, since_best = 0, 0
    records: List[PatchRecord] = []
    trace = FitTrace(solver=CalibratorKind.mcboost.value, stop_reason=StopReason.MAX_ROUNDS)

    for r in range(1, max_rounds + 1):
        cell = _best_cell(p_train, train.groups, train.labels, d)
        if cell is None:
            trace.stop_reason = StopReason.NO_IMPROVING_CELL
            break
        _, i, level, value = cell
        records.append(PatchRecord(group=i, level=level, value=value))
        p_train[(train.groups[:, i] == 1) & (p_train == level)] = value
        split = f'g{i}@{level:.6g}->{value:.6g}'
        if holdout is None:
            trace.add(IterationRecord(iteration=r, train_loss=squared_loss(p_train, train.labels), split=split))
            best_len = len(records)
            continue
        p_hold[(holdout.groups[:, i] == 1) & (p_hold == level)] = value
        err, _ = multicalibration_error(p_hold, holdout.groups, holdout.labels)
        trace.add(IterationRecord(iteration=r, train_loss=squared_loss(p_train, train.labels),
                                  holdout_loss=squared_loss(p_hold, holdout.labels), holdout_mc=err, split=split))
        if err < best_err:
            best_err, best_len, since_best = err, len(records), 0
        else:
            since_best += 1
            if since_best >= full_pass:
                trace.stop_reason = StopReason.EARLY_STOPPING
                break

    trace.best_iteration = best_len
    logger.info(f'mcboost stopped ({trace.stop_reason.value}) after {len(records)} patches; keeping {best_len}')
    return CalibratedModel(kind=CalibratorKind.mcboost, num_groups=ds.k, payload=PatchTable(records=records[:best_len]),
                           discretizer=d, trace=trace,
                           config={'holdout_fraction': holdout_fraction, 'max_rounds': max_rounds, 'seed': seed})


def _fit_level_learner(groups: np.ndarray, labels: np.ndarray, depth: int, subsample: float,
                       min_leaf_count: int, rng: np.random.Generator) -> Optional[DepthTwoTree]:
    zeros = np.zeros(len(labels))
    searcher = SplitSearcher(zeros, groups, np.zeros(0), TreeFamily.pooled, depth, min_leaf_count)
    choice = searcher.best_split(labels, searcher.subsample(subsample, rng))
    if choice is None:
        return None
    tree, _ = searcher.fit_tree(choice, zeros, labels)
    return tree


def calibrate_lsboost(ds: CalibrationDataset, d: Discretizer, depth: int = 2, learning_rate: float = 1.0,
                      subsample: float = 1.0, max_rounds: int = 100, seed: int = 0, min_leaf_count: int = 1,
                      holdout_fraction: float = 0.3) -> CalibratedModel:
    """Per round, fit a group-only tree to y inside every level set and move p toward it, re-discretized."""
    _require_discretizer(d, 'lsboost')
    if depth not in (1, 2):
        raise ConfigError(f'lsboost depth must be 1 or 2, got {depth}')
    if not 0.0 < subsample <= 1.0:
        raise ConfigError(f'subsample must be in (0, 1], got {subsample}')
    train, holdout = _holdout_split(ds, holdout_fraction, seed)
    rng = np.random.default_rng(seed)
    p_train = d.apply(train.base_scores)
    p_hold = d.apply(holdout.base_scores) if holdout is not None else None
    best_loss = squared_loss(p_hold, holdout.labels) if holdout is not None else None
    rounds: List[List[LevelLearner]] = []
    trace = FitTrace(solver=CalibratorKind.lsboost.value, stop_reason=StopReason.MAX_ROUNDS)

    for r in range(1, max_rounds + 1):
        learners = []
        for level in np.unique(p_train):
            rows = p_train == level
            if rows.sum() < min_leaf_count:
                logger.debug(f'round {r}: level {level} has {rows.sum()} rows; skipped')
                continue
            tree = _fit_level_learner(train.groups[rows], train.labels[rows], depth, subsample, min_leaf_count, rng)
            if tree is not None:
                learners.append(LevelLearner(level=float(level), tree=tree))
        new_train = _level_set_step(p_train, train.groups, learners, learning_rate, d)
        if holdout is None:
            if np.array_equal(new_train, p_train):
                trace.stop_reason = StopReason.CONVERGED
                break
            trace.add(IterationRecord(iteration=r, train_loss=squared_loss(new_train, train.labels),
                                      split=f'{len(learners)} level learners'))
            rounds.append(learners)
            p_train = new_train
            continue
        new_hold = _level_set_step(p_hold, holdout.groups, learners, learning_rate, d)
        loss = squared_loss(new_hold, holdout.labels)
        trace.add(IterationRecord(iteration=r, train_loss=squared_loss(new_train, train.labels), holdout_loss=loss,
                                  split=f'{len(learners)} level learners'))
        if not loss < best_loss:
            trace.stop_reason = StopReason.EARLY_STOPPING
            break
        rounds.append(learners)
        best_loss, p_train, p_hold = loss, new_train, new_hold

    trace.best_iteration = len(rounds)
    logger.info(f'lsboost stopped ({trace.stop_reason.value}); keeping {len(rounds)} rounds')
    return CalibratedModel(kind=CalibratorKind.lsboost, num_groups=ds.k,
                           payload=LevelSetBoostModel(learning_rate=learning_rate, rounds=rounds), discretizer=d,
                           trace=trace,
                           config={'depth': depth, 'learning_rate': learning_rate, 'subsample': subsample,
                                   'max_rounds': max_rounds, 'seed': seed, 'min_leaf_count': min_leaf_count,
                                   'holdout_fraction': holdout_fraction})


def _soft_threshold(rho: float, t: float) -> float:
    return float(np.sign(rho) * max(abs(rho) - t, 0.0))


def fit_lasso(targets: np.ndarray, groups: np.ndarray, lam: float):
    """Cyclic coordinate descent for (1/n)|t - b - Gw|^2 + lam |w|_1 with an unpenalized intercept."""
    n, k = groups.shape
    mass = groups.mean(axis=0)
    w = np.zeros(k)
    b = float(targets.mean())
    resid = targets - b
    for sweep in range(1, LASSO_MAX_SWEEPS + 1):
        change = 0.0
        for j in range(k):
            if mass[j] == 0:
                continue
            g = groups[:, j]
            rho = float(g @ resid) / n + mass[j] * w[j]
            new = _soft_threshold(rho, lam / 2.0) / mass[j]
            if new != w[j]:
                resid -= (new - w[j]) * g
                change = max(change, abs(new - w[j]))
                w[j] = new
        shift = float(resid.mean())
        resid -= shift
        b += shift
        change = max(change, abs(shift))
        if change < LASSO_TOLERANCE:
            return b, w, sweep
    logger.warning(f'coordinate descent did not reach tolerance {LASSO_TOLERANCE} in {LASSO_MAX_SWEEPS} sweeps')
    return b, w, LASSO_MAX_SWEEPS


def calibrate_multiaccurate(ds: CalibrationDataset, lam: float = 0.0) -> CalibratedModel:
    if lam < 0:
        raise ConfigError(f'lambda must be >= 0, got {lam}')
    b, w, sweeps = fit_lasso(ds.labels - ds.base_scores, ds.groups, lam)
    logger.info(f'multiaccurate fit converged in {sweeps} sweeps')
    return CalibratedModel(kind=CalibratorKind.multiaccurate, num_groups=ds.k,
                           payload=LinearModel(intercept=b, weights=w.tolist(), lam=lam), config={'lam': lam})
