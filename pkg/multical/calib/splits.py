from typing import NamedTuple, Optional

import numpy as np

from multical.calib.model import TreeFamily
from multical.calib.trees import DepthTwoTree, SplitPredicate

TRIVIAL_THRESHOLD = 0.0


def candidate_thresholds(f0: np.ndarray, max_bins: int) -> np.ndarray:
    """Midpoints between distinct scores; quantile-spaced subset of them above max_bins."""
    u = np.unique(f0)
    if len(u) < 2:
        return np.zeros(0)
    mids = (u[:-1] + u[1:]) / 2.0
    mids = np.where(mids > u[:-1], mids, u[1:])
    if len(mids) <= max_bins:
        return mids
    below = np.searchsorted(np.sort(f0), u[:-1], side='right')
    targets = np.arange(1, max_bins + 1) * len(f0) / (max_bins + 1)
    idx = np.unique(np.clip(np.searchsorted(below, targets), 0, len(mids) - 1))
    return mids[idx]


def _suffix(a: np.ndarray) -> np.ndarray:
    """out[k] = sum(a[k:]) along axis 0, with a trailing zero row."""
    s = np.cumsum(a[::-1], axis=0)[::-1]
    return np.concatenate([s, np.zeros((1,) + a.shape[1:])], axis=0)


def _leaf(s, c):
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(c > 0, s * s / np.where(c > 0, c, 1.0), 0.0)


class SplitChoice(NamedTuple):
    root: SplitPredicate
    left: SplitPredicate
    right: SplitPredicate
    score: float


class SplitSearcher:
    """Exhaustive greedy search over depth-two trees on (f0 thresholds, group indicators).

    Every candidate's leaf sums come from per-bin and per-group histograms of the targets, so a
    search costs O(n K^2 + (T + K)^2) regardless of how many (root, child) pairs are scored.
    """

    def __init__(self, f0: np.ndarray, groups: np.ndarray, thresholds: np.ndarray,
                 family: TreeFamily = TreeFamily.pooled, depth: int = 2, min_leaf_count: int = 1):
        self.groups = np.asarray(groups, dtype=float)
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.family = family
        self.depth = depth
        self.min_leaf_count = min_leaf_count
        self.n, self.k = self.groups.shape
        self.t = len(self.thresholds)
        self.bins = np.searchsorted(self.thresholds, np.asarray(f0, dtype=float), side='right')
        ones = np.ones(self.n)
        self.bin_counts, self.hist_counts, self.group_counts, self.pair_counts = self._histograms(ones)

    @classmethod
    def from_scores(cls, f0, groups, max_bins: int, family: TreeFamily = TreeFamily.pooled,
                    depth: int = 2, min_leaf_count: int = 1) -> 'SplitSearcher':
        return cls(f0, groups, candidate_thresholds(np.asarray(f0, dtype=float), max_bins), family, depth,
                   min_leaf_count)

    @property
    def n_candidates(self) -> int:
        if self.family == TreeFamily.level_group:
            return self.k
        return self.t + self.k

    def _histograms(self, w: np.ndarray):
        t1 = self.t + 1
        by_bin = np.bincount(self.bins, weights=w, minlength=t1)
        by_bin_group = np.stack([np.bincount(self.bins, weights=w * self.groups[:, a], minlength=t1)
                                 for a in range(self.k)], axis=1)
        by_group = self.groups.T @ w
        by_pair = self.groups.T @ (self.groups * w[:, None])
        return _suffix(by_bin), _suffix(by_bin_group), by_group, by_pair

    def _threshold(self, k: int) -> SplitPredicate:
        # k is 1-based over self.thresholds; k == 0 is the always-true root
        return SplitPredicate.threshold(TRIVIAL_THRESHOLD if k == 0 else self.thresholds[k - 1])

    def _candidate(self, j: int) -> SplitPredicate:
        if j < self.t:
            return self._threshold(j + 1)
        return SplitPredicate.group(j - self.t)

    def best_split(self, targets: np.ndarray, allowed: Optional[np.ndarray] = None) -> Optional[SplitChoice]:
        targets = np.asarray(targets, dtype=float)
        if allowed is None:
            allowed = np.ones(self.n_candidates, dtype=bool)
        if self.family == TreeFamily.level_group:
            return self._best_level_group(targets, allowed)
        return self._best_pooled(targets, allowed)

    def _side_best(self, side_s, side_c, part_s, part_c, allowed):
        """Best child per root row: column 0 is 'no split', column j+1 is candidate j."""
        mlc = self.min_leaf_count
        side_ok = (side_c == 0) | (side_c >= mlc)
        no_split = np.where(side_ok, _leaf(side_s, side_c), -np.inf)
        if self.depth < 2:
            return no_split, np.zeros(len(side_s), dtype=int)
        rest_s = side_s[:, None] - part_s
        rest_c = side_c[:, None] - part_c
        valid = (part_c >= mlc) & (rest_c >= mlc) & allowed[None, :] & side_ok[:, None]
        scores = np.where(valid, _leaf(part_s, part_c) + _leaf(rest_s, rest_c), -np.inf)
        full = np.concatenate([no_split[:, None], scores], axis=1)
        best = np.argmax(full, axis=1)
        return full[np.arange(len(side_s)), best], best

    def _best_pooled(self, r: np.ndarray, allowed: np.ndarray) -> Optional[SplitChoice]:
        t, k = self.t, self.k
        sb, sh, gs, ps = self._histograms(r)
        cb, ch, gc, pc = self.bin_counts, self.hist_counts, self.group_counts, self.pair_counts
        total_s, total_c = sb[0], cb[0]
        ks = np.arange(1, t + 1)

        # root thresholds (rows) x child candidates (columns: thresholds then groups)
        inner = np.maximum.outer(ks, ks)
        outer = np.minimum.outer(ks, ks)
        thr_in_s = np.concatenate([sb[inner], sh[ks]], axis=1) if t else np.zeros((0, t + k))
        thr_in_c = np.concatenate([cb[inner], ch[ks]], axis=1) if t else np.zeros((0, t + k))
        thr_out_s = np.concatenate([sb[outer] - sb[ks][:, None], gs[None, :] - sh[ks]], axis=1) if t \
            else np.zeros((0, t + k))
        thr_out_c = np.concatenate([cb[outer] - cb[ks][:, None], gc[None, :] - ch[ks]], axis=1) if t \
            else np.zeros((0, t + k))

        # root groups (rows) x child candidates
        grp_in_s = np.concatenate([sh[ks].T, ps], axis=1)
        grp_in_c = np.concatenate([ch[ks].T, pc], axis=1)
        grp_out_s = np.concatenate([sb[ks][None, :] - sh[ks].T, gs[None, :] - ps], axis=1)
        grp_out_c = np.concatenate([cb[ks][None, :] - ch[ks].T, gc[None, :] - pc], axis=1)

        in_s = np.concatenate([sb[ks], gs])
        in_c = np.concatenate([cb[ks], gc])
        best_in, child_in = self._side_best(in_s, in_c, np.vstack([thr_in_s, grp_in_s]),
                                            np.vstack([thr_in_c, grp_in_c]), allowed)
        best_out, child_out = self._side_best(total_s - in_s, total_c - in_c, np.vstack([thr_out_s, grp_out_s]),
                                              np.vstack([thr_out_c, grp_out_c]), allowed)
        totals = np.where(allowed, best_in + best_out, -np.inf)
        if not np.isfinite(totals).any():
            return None
        root = int(np.argmax(totals))
        root_pred = self._candidate(root)
        left = root_pred if child_in[root] == 0 else self._candidate(child_in[root] - 1)
        right = root_pred if child_out[root] == 0 else self._candidate(child_out[root] - 1)
        return SplitChoice(root_pred, left, right, float(totals[root]))

    def _best_level_group(self, r: np.ndarray, allowed: np.ndarray) -> Optional[SplitChoice]:
        sb, sh, gs, _ = self._histograms(r)
        cb, ch, gc = self.bin_counts, self.hist_counts, self.group_counts
        mlc = self.min_leaf_count
        ks = np.arange(0, self.t + 1)
        leaves_s = [sh[ks], sb[ks][:, None] - sh[ks], gs[None, :] - sh[ks], (sb[0] - sb[ks])[:, None] - (gs - sh[ks])]
        leaves_c = [ch[ks], cb[ks][:, None] - ch[ks], gc[None, :] - ch[ks], (cb[0] - cb[ks])[:, None] - (gc - ch[ks])]
        valid = np.ones((len(ks), self.k), dtype=bool) & allowed[None, :]
        score = np.zeros((len(ks), self.k))
        for s, c in zip(leaves_s, leaves_c):
            valid &= (c == 0) | (c >= mlc)
            score += _leaf(s, c)
        score = np.where(valid, score, -np.inf)
        if not np.isfinite(score).any():
            return None
        k, b = np.unravel_index(int(np.argmax(score)), score.shape)
        g = SplitPredicate.group(int(b))
        return SplitChoice(self._threshold(int(k)), g, g, float(score[k, b]))

    def leaf_index(self, choice: SplitChoice, f0: np.ndarray) -> np.ndarray:
        in_root = choice.root.mask(f0, self.groups)
        in_left = choice.left.mask(f0, self.groups)
        in_right = choice.right.mask(f0, self.groups)
        return np.where(in_root, np.where(in_left, 0, 1), np.where(in_right, 2, 3))

    def fit_tree(self, choice: SplitChoice, f0: np.ndarray, targets: np.ndarray, scale: float = 1.0):
        """Leaf means of the targets times `scale`; empty leaves get 0. Returns the tree and its row outputs."""
        leaf = self.leaf_index(choice, f0)
        sums = np.bincount(leaf, weights=targets, minlength=4)
        counts = np.bincount(leaf, minlength=4)
        values = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0) * scale
        tree = DepthTwoTree(root=choice.root, left=choice.left, right=choice.right,
                            leaves=tuple(float(v) for v in values))
        return tree, values[leaf]

    def subsample(self, fraction: float, rng: np.random.Generator) -> np.ndarray:
        c = self.n_candidates
        allowed = np.ones(c, dtype=bool)
        if fraction >= 1.0 or c == 0:
            return allowed
        keep = max(1, int(round(fraction * c)))
        allowed[:] = False
        allowed[rng.choice(c, size=keep, replace=False)] = True
        return allowed
