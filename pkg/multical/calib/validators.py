from abc import ABC, abstractmethod

import numpy as np
import pandas as pd

GROUP_PREFIX = 'g_'


class Validator(ABC):

    def __init__(self, required_columns: list, optional_prefixes: list):
        self.required_columns = required_columns
        self.optional_prefixes = optional_prefixes

    @abstractmethod
    def validate(self, data) -> list:
        pass

    def check_required_columns(self, cols: list) -> list:
        missing_columns = [c for c in self.required_columns if c not in cols]
        return [f'missing column {col}' for col in missing_columns]


def _finite_errors(name: str, values: np.ndarray) -> list:
    if not np.all(np.isfinite(values)):
        return [f'{name} contains NaN or Inf']
    return []


class ArrayValidator(Validator):
    """Checks the (f0, g, y) arrays every calibrator consumes."""

    def __init__(self):
        super().__init__(['y', 'f0'], [GROUP_PREFIX])

    def validate(self, data) -> list:
        base_scores, groups, labels = data
        errors = []
        n = len(base_scores)
        if n == 0:
            return ['empty file']
        if len(labels) != n or groups.ndim != 2 or groups.shape[0] != n:
            return [f'shape mismatch: f0 has {n} rows, y has {len(labels)}, groups has shape {groups.shape}']
        if groups.shape[1] == 0:
            errors.append('at least one group column is required')
        errors.extend(_finite_errors('f0', base_scores))
        errors.extend(_finite_errors('y', labels))
        if errors:
            return errors
        if np.any((base_scores < 0.0) | (base_scores > 1.0)):
            errors.append('base score out of range')
        if np.any((labels < 0.0) | (labels > 1.0)):
            errors.append('label out of range')
        if groups.size and not np.all((groups == 0) | (groups == 1)):
            errors.append('group value not binary')
        return errors


class CsvValidator(Validator):

    def __init__(self):
        super().__init__(['y', 'f0'], [GROUP_PREFIX])

    def group_columns(self, cols: list) -> list:
        return [c for c in cols if c.startswith(tuple(self.optional_prefixes))]

    def ignored_columns(self, cols: list) -> list:
        return [c for c in cols if c not in self.required_columns and not c.startswith(tuple(self.optional_prefixes))]

    def validate(self, data: pd.DataFrame) -> list:
        errors = self.check_required_columns(list(data.columns))
        if not self.group_columns(list(data.columns)):
            errors.append(f'no group columns (prefix {GROUP_PREFIX})')
        if errors:
            return errors
        if len(data) == 0:
            return ['empty file']
        for col in self.required_columns + self.group_columns(list(data.columns)):
            if not pd.api.types.is_numeric_dtype(data[col]):
                errors.append(f'column {col} is not numeric')
        return errors
