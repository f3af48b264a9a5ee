from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from multical.calib.discretize import Discretizer
from multical.calib.errors import DataError, NotRepresentableError
from multical.calib.model import PredicateKind


class SplitPredicate(BaseModel):
    """Either {x : f0(x) >= value} or {x : g_index(x) = 1}."""
    kind: PredicateKind
    value: Optional[float] = None
    index: Optional[int] = None

    class Config:
        allow_mutation = False

    @classmethod
    def threshold(cls, value: float) -> 'SplitPredicate':
        return cls(kind=PredicateKind.threshold, value=float(value))

    @classmethod
    def group(cls, index: int) -> 'SplitPredicate':
        return cls(kind=PredicateKind.group, index=int(index))

    def mask(self, f0: np.ndarray, groups: np.ndarray) -> np.ndarray:
        if self.kind == PredicateKind.threshold:
            return f0 >= self.value
        if self.index >= groups.shape[1]:
            raise DataError(f'group index {self.index} out of range for {groups.shape[1]} groups')
        return groups[:, self.index] == 1

    def describe(self) -> str:
        if self.kind == PredicateKind.threshold:
            return f'f0>={self.value:.6g}'
        return f'g{self.index}'

    def to_dict(self) -> dict:
        if self.kind == PredicateKind.threshold:
            return {'kind': self.kind.value, 'value': self.value}
        return {'kind': self.kind.value, 'index': self.index}


class DepthTwoTree(BaseModel):
    """Leaves: c1 in-root/in-child, c2 in-root/out-child, c3 out-root/in-child, c4 out-root/out-child."""
    root: SplitPredicate
    left: SplitPredicate
    right: SplitPredicate
    leaves: Tuple[float, float, float, float]

    class Config:
        allow_mutation = False

    def predict(self, f0: np.ndarray, groups: np.ndarray) -> np.ndarray:
        c1, c2, c3, c4 = self.leaves
        in_root = self.root.mask(f0, groups)
        return np.where(in_root,
                        np.where(self.left.mask(f0, groups), c1, c2),
                        np.where(self.right.mask(f0, groups), c3, c4))

    def scaled(self, factor: float) -> 'DepthTwoTree':
        return DepthTwoTree(root=self.root, left=self.left, right=self.right,
                            leaves=tuple(factor * c for c in self.leaves))

    def describe(self) -> str:
        return f'{self.root.describe()} ? {self.left.describe()} : {self.right.describe()}'

    def to_dict(self) -> dict:
        return {'root': self.root.to_dict(), 'left': self.left.to_dict(), 'right': self.right.to_dict(),
                'leaves': list(self.leaves)}


class EnsemblePredictor(BaseModel):
    trees: List[DepthTwoTree] = []
    clamp: bool = True
    metadata: Dict[str, Any] = {}

    class Config:
        allow_mutation = False

    def offset(self, f0, groups) -> np.ndarray:
        f0, groups = _as_rows(f0, groups)
        total = np.zeros(len(f0))
        for tree in self.trees:
            total += tree.predict(f0, groups)
        return total

    def predict(self, f0, groups) -> np.ndarray:
        f0, groups = _as_rows(f0, groups)
        out = f0 + self.offset(f0, groups)
        return np.clip(out, 0.0, 1.0) if self.clamp else out

    def truncated(self, n_trees: int) -> 'EnsemblePredictor':
        return EnsemblePredictor(trees=self.trees[:n_trees], clamp=self.clamp,
                                 metadata={**self.metadata, 'iterations': n_trees})

    def to_dict(self) -> dict:
        return {'base': 'external', 'clamp': self.clamp, 'trees': [t.to_dict() for t in self.trees],
                'metadata': dict(self.metadata)}


def _as_rows(f0, groups) -> Tuple[np.ndarray, np.ndarray]:
    f0 = np.atleast_1d(np.asarray(f0, dtype=float))
    groups = np.asarray(groups, dtype=float)
    if groups.ndim == 1:
        groups = groups.reshape(1, -1) if len(f0) == 1 else groups.reshape(-1, 1)
    if groups.shape[0] != len(f0):
        raise DataError(f'group matrix has {groups.shape[0]} rows for {len(f0)} scores')
    return f0, groups


def tree_predict(t: DepthTwoTree, f0: float, g) -> float:
    f0, groups = _as_rows(f0, g)
    return float(t.predict(f0, groups)[0])


def ensemble_predict(e: EnsemblePredictor, f0: float, g) -> float:
    return float(e.predict(f0, g)[0])


class LevelSetPatch(BaseModel):
    """Per level value v_j: h_j(g) = intercepts[j] + coefs[j] . g."""
    levels: List[float]
    intercepts: List[float]
    coefs: List[List[float]]

    @classmethod
    def zeros(cls, levels, k: int) -> 'LevelSetPatch':
        levels = [float(v) for v in levels]
        return cls(levels=levels, intercepts=[0.0] * len(levels), coefs=[[0.0] * k for _ in levels])

    @property
    def k(self) -> int:
        return len(self.coefs[0]) if self.coefs else 0

    def level_index(self, base) -> np.ndarray:
        levels = np.asarray(self.levels, dtype=float)
        base = np.asarray(base, dtype=float)
        idx = np.clip(np.searchsorted(levels, base), 0, max(len(levels) - 1, 0))
        if len(levels) == 0 or np.any(levels[idx] != base):
            raise DataError('base value is not one of the patch levels')
        return idx

    def evaluate(self, base, groups) -> np.ndarray:
        idx = self.level_index(base)
        groups = np.asarray(groups, dtype=float)
        coefs = np.asarray(self.coefs, dtype=float)
        return np.asarray(self.intercepts, dtype=float)[idx] + np.einsum('ij,ij->i', coefs[idx], groups)


def apply_patch(pred, groups, patch: LevelSetPatch) -> np.ndarray:
    return np.asarray(pred, dtype=float) + patch.evaluate(pred, groups)


class _Affine:
    """const + sum_i coef[i] * g_i, over binary g."""

    def __init__(self, const: float = 0.0, coef: Dict[int, float] = None):
        self.const = const
        self.coef = dict(coef or {})

    def __add__(self, other: '_Affine') -> '_Affine':
        coef = dict(self.coef)
        for i, c in other.coef.items():
            coef[i] = coef.get(i, 0.0) + c
        return _Affine(self.const + other.const, coef)

    def __sub__(self, other: '_Affine') -> '_Affine':
        return self + _Affine(-other.const, {i: -c for i, c in other.coef.items()})

    def times_group(self, a: int, where: str) -> '_Affine':
        coef = {a: self.const}
        for i, c in self.coef.items():
            if i != a and c != 0.0:
                raise NotRepresentableError(f'{where} couples groups {a} and {i}; not a linear patch')
            if i == a:
                coef[a] += c
        return _Affine(0.0, coef)


def _child_affine(child: SplitPredicate, v: float, c_in: float, c_out: float) -> _Affine:
    if child.kind == PredicateKind.threshold:
        return _Affine(c_in if v >= child.value else c_out)
    return _Affine(c_out, {child.index: c_in - c_out})


def _tree_at_level(tree: DepthTwoTree, v: float, where: str) -> _Affine:
    c1, c2, c3, c4 = tree.leaves
    if tree.root.kind == PredicateKind.threshold:
        if v >= tree.root.value:
            return _child_affine(tree.left, v, c1, c2)
        return _child_affine(tree.right, v, c3, c4)
    inside = _child_affine(tree.left, v, c1, c2)
    outside = _child_affine(tree.right, v, c3, c4)
    # g_a * in + (1 - g_a) * out
    return outside + (inside - outside).times_group(tree.root.index, where)


def _check_threshold(value: float, d: Discretizer, levels: np.ndarray, where: str):
    if d is None or value <= 0.0 or value > 1.0 or value in d.boundaries:
        return
    boundaries = np.asarray(d.boundaries, dtype=float)
    cell = np.searchsorted(boundaries, value, side='right')
    if np.any(np.searchsorted(boundaries, levels, side='right') == cell):
        raise NotRepresentableError(f'{where} thresholds at {value}, strictly inside a level set')


def decompose_to_patches(e: EnsemblePredictor, base, k: int, d: Discretizer = None) -> LevelSetPatch:
    """Rewrite the ensemble's additive offset as a per-level-set affine function of the groups.

    Exact for trees whose value at a fixed level depends on at most one group; a tree that
    multiplies two different groups at some level raises NotRepresentableError.
    """
    levels = np.unique(np.asarray(base, dtype=float))
    patch = LevelSetPatch.zeros(levels, k)
    for t, tree in enumerate(e.trees):
        for p in (tree.root, tree.left, tree.right):
            if p.kind == PredicateKind.threshold:
                _check_threshold(p.value, d, levels, f'tree {t}')
            elif p.index >= k:
                raise DataError(f'tree {t} uses group {p.index} but only {k} groups exist')
    for j, v in enumerate(levels):
        total = _Affine()
        for t, tree in enumerate(e.trees):
            total = total + _tree_at_level(tree, float(v), f'tree {t} at level {v}')
        patch.intercepts[j] = total.const
        for i, c in total.coef.items():
            patch.coefs[j][i] = c
    return patch


def patches_to_ensemble(patch: LevelSetPatch, clamp: bool = False) -> EnsemblePredictor:
    """Telescoping construction: sum_j 1{f0 >= v_j} (h_j - h_{j-1}) with one group per tree."""
    trees = []
    prev_intercept, prev_coefs = 0.0, np.zeros(patch.k)
    for v, intercept, coefs in zip(patch.levels, patch.intercepts, patch.coefs):
        coefs = np.asarray(coefs, dtype=float)
        root = SplitPredicate.threshold(v)
        delta = intercept - prev_intercept
        if delta != 0.0:
            trees.append(DepthTwoTree(root=root, left=root, right=root, leaves=(delta, delta, 0.0, 0.0)))
        for i, b in enumerate(coefs - prev_coefs):
            if b != 0.0:
                g = SplitPredicate.group(i)
                trees.append(DepthTwoTree(root=root, left=g, right=g, leaves=(float(b), 0.0, 0.0, 0.0)))
        prev_intercept, prev_coefs = intercept, coefs
    return EnsemblePredictor(trees=trees, clamp=clamp, metadata={'solver': 'patch'})
