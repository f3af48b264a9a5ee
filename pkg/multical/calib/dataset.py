import math
from typing import List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from multical.calib.config import get_logger
from multical.calib.errors import DataError
from multical.calib.file_utils import PathLike, read_frame, write_frame
from multical.calib.model import SplitSpec
from multical.calib.validators import ArrayValidator, CsvValidator, GROUP_PREFIX

logger = get_logger(__name__)

ARRAY_VALIDATOR = ArrayValidator()
CSV_VALIDATOR = CsvValidator()


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class CalibrationDataset(BaseModel):
    """Rows of (f0(x), g(x), y): the only inputs any calibrator sees."""
    base_scores: np.ndarray
    groups: np.ndarray
    labels: np.ndarray
    group_names: List[str]

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @classmethod
    def from_arrays(cls, base_scores, groups, labels, group_names=None) -> 'CalibrationDataset':
        base_scores = np.asarray(base_scores, dtype=float)
        labels = np.asarray(labels, dtype=float)
        groups = np.asarray(groups, dtype=float)
        if groups.ndim == 1:
            groups = groups.reshape(-1, 1)
        errors = ARRAY_VALIDATOR.validate((base_scores, groups, labels))
        if errors:
            raise DataError('; '.join(errors))
        if group_names is None:
            group_names = [f'{i + 1}' for i in range(groups.shape[1])]
        if len(group_names) != groups.shape[1]:
            raise DataError(f'{len(group_names)} group names for {groups.shape[1]} groups')
        ds = cls(base_scores=_frozen(base_scores, float), groups=_frozen(groups, float),
                 labels=_frozen(labels, float), group_names=list(group_names))
        for i in ds.empty_groups:
            logger.warning(f'group {ds.group_names[i]} has no member rows')
        return ds

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return self.groups.shape[1]

    @property
    def empty_groups(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.groups.sum(axis=0) == 0)]

    def take(self, rows: np.ndarray) -> 'CalibrationDataset':
        return CalibrationDataset(base_scores=_frozen(self.base_scores[rows], float),
                                  groups=_frozen(self.groups[rows], float),
                                  labels=_frozen(self.labels[rows], float), group_names=list(self.group_names))

    def with_base_scores(self, base_scores: np.ndarray) -> 'CalibrationDataset':
        return CalibrationDataset.from_arrays(base_scores, self.groups, self.labels, self.group_names)

    def check_compatible(self, other: 'CalibrationDataset'):
        if self.group_names != other.group_names:
            raise DataError(f'group mismatch: {self.group_names} vs {other.group_names}')


def load_csv(path: PathLike) -> CalibrationDataset:
    df = read_frame(path)
    errors = CSV_VALIDATOR.validate(df)
    if errors:
        raise DataError('; '.join(errors))
    ignored = CSV_VALIDATOR.ignored_columns(list(df.columns))
    if ignored:
        logger.warning(f'ignoring columns {ignored}')
    group_cols = CSV_VALIDATOR.group_columns(list(df.columns))
    return CalibrationDataset.from_arrays(df['f0'].to_numpy(dtype=float), df[group_cols].to_numpy(dtype=float),
                                          df['y'].to_numpy(dtype=float),
                                          [c[len(GROUP_PREFIX):] for c in group_cols])


def write_csv(ds: CalibrationDataset, path: PathLike):
    df = pd.DataFrame({'y': ds.labels, 'f0': ds.base_scores})
    for i, name in enumerate(ds.group_names):
        df[f'{GROUP_PREFIX}{name}'] = ds.groups[:, i].astype(int)
    write_frame(df, path)


def holdout_size(n: int, fraction: float) -> int:
    # guard against 0.29 * 100 == 28.999999999999996
    return int(math.floor(fraction * n + 1e-9))


def split_rows(n: int, spec: SplitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (train, holdout) row indices sized ceil((1-f)n) and floor(fn); the holdout may be empty."""
    if n < 2:
        raise DataError(f'cannot split {n} row(s); need at least 2')
    n_holdout = holdout_size(n, spec.holdout_fraction)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[n_holdout:]), np.sort(perm[:n_holdout])


def split_holdout(ds: CalibrationDataset, spec: SplitSpec) -> Tuple[CalibrationDataset, CalibrationDataset]:
    train_rows, holdout_rows = split_rows(ds.n, spec)
    return ds.take(train_rows), ds.take(holdout_rows)
