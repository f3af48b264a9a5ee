from typing import List

import numpy as np
from pydantic import BaseModel, Extra

from multical.calib.dataset import CalibrationDataset
from multical.calib.errors import ConfigError, DataError
from multical.calib.model import DiscretizerKind


class Discretizer(BaseModel):
    """Monotone right-continuous step map: cell j is [boundaries[j-1], boundaries[j]) and maps to outputs[j]."""
    kind: DiscretizerKind
    m: int
    boundaries: List[float]
    outputs: List[float]

    class Config:
        extra = Extra.forbid
        allow_mutation = False

    def apply(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        cells = np.searchsorted(np.asarray(self.boundaries, dtype=float), scores, side='right')
        return np.asarray(self.outputs, dtype=float)[cells]

    def __call__(self, scores) -> np.ndarray:
        return self.apply(scores)

    @property
    def codomain(self) -> np.ndarray:
        return np.asarray(self.outputs, dtype=float)


def make_grid(m: int) -> Discretizer:
    if m < 1:
        raise ConfigError(f'grid size m must be >= 1, got {m}')
    # boundaries i/m sit halfway between neighbouring outputs; a tie lands in the upper cell
    return Discretizer(kind=DiscretizerKind.grid, m=m,
                       boundaries=[i / m for i in range(1, m)],
                       outputs=[(2 * i - 1) / (2 * m) for i in range(1, m + 1)])


def _quantile_boundaries(s: np.ndarray, m: int) -> List[float]:
    n = len(s)
    boundaries = []
    for j in range(1, m):
        idx = int(np.ceil(j * n / m))
        if idx <= 0 or idx >= n:
            continue
        lo, hi = s[idx - 1], s[idx]
        b = hi if lo == hi else (lo + hi) / 2.0
        if b > s[0] and (not boundaries or b > boundaries[-1]):
            boundaries.append(float(b))
    return boundaries


def make_quantile(m: int, scores) -> Discretizer:
    if m < 1:
        raise ConfigError(f'quantile size m must be >= 1, got {m}')
    s = np.sort(np.asarray(scores, dtype=float))
    if len(s) == 0:
        raise DataError('quantile discretizer needs at least one score')
    distinct = np.unique(s)
    if len(distinct) <= m:
        boundaries = [float(b) for b in (distinct[:-1] + distinct[1:]) / 2.0]
    else:
        boundaries = _quantile_boundaries(s, m)
    return _from_boundaries(m, s, boundaries)


def _from_boundaries(m: int, s: np.ndarray, boundaries: List[float]) -> Discretizer:
    cells = np.searchsorted(np.asarray(boundaries, dtype=float), s, side='right')
    counts = np.bincount(cells, minlength=len(boundaries) + 1)
    sums = np.bincount(cells, weights=s, minlength=len(boundaries) + 1)
    if np.any(counts == 0):
        # an empty upper cell: drop the boundary below it
        return _from_boundaries(m, s, [b for i, b in enumerate(boundaries) if counts[i + 1] > 0])
    outputs = [float(np.clip(sums[i] / counts[i], 0.0, 1.0)) for i in range(len(counts))]
    return Discretizer(kind=DiscretizerKind.quantile, m=m, boundaries=boundaries, outputs=outputs)


def apply(d: Discretizer, scores) -> np.ndarray:
    return d.apply(scores)


def discretization_error(ds: CalibrationDataset, pred, d: Discretizer) -> float:
    """Signed loss change caused by discretizing: l(d(pred)) - l(pred)."""
    labels = ds.labels
    pred = np.asarray(pred, dtype=float)
    if len(pred) != len(labels):
        raise DataError(f'prediction length {len(pred)} does not match {len(labels)} rows')
    return float(np.mean((d.apply(pred) - labels) ** 2) - np.mean((pred - labels) ** 2))


def nonempty_range_size(d: Discretizer, scores) -> int:
    return int(len(np.unique(d.apply(scores))))
