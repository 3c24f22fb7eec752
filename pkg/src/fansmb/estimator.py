"""Conditional entropy from a trained flow by Monte-Carlo integration.

``H(T | S) = E[ sum_{i in S} log f'_S(x_i) - sum_{j in T+S} log f'_{TS}(x_j) ] + (1 + log 2 pi) / 2``

where ``f_S`` is the flow restricted to subset ``S``. Both sums are evaluated
on the same samples, so the estimate is a mean of per-sample differences.
"""
import math
import threading
from dataclasses import dataclass

import numpy as np

from .gauss import GAUSS_CONST


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    std_error: float
    K: int
    subset: frozenset
    target: int


def eval_indices(n, K, seed):
    """Sample indices for the MC average: without replacement when ``K <= n``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if K <= n:
        return np.sort(rng.choice(n, K, replace=False))
    return rng.integers(0, n, K)


class FansScorer:
    """Entropy oracle backed by a trained :class:`~fansmb.fans.FansModel`.

    The evaluation sample set is drawn once at construction and reused for
    every query. Per-sample log-derivative sums are cached by subset.
    """

    kind = "fans"

    def __init__(self, model, data, K=1000, seed=0, chunk_rows=50_000):
        self.model = model
        x = np.asarray(getattr(data, "data", data), dtype=np.float64)
        if x.shape[1] != model.config.d:
            raise ValueError(f"data has {x.shape[1]} columns, model expects {model.config.d}")
        self.d = model.config.d
        self.idx = eval_indices(x.shape[0], K, seed)
        self.x = x[self.idx]
        self.K = len(self.idx)
        self.chunk_rows = chunk_rows
        self._ld = {frozenset(): np.zeros(self.K)}
        self._lock = threading.Lock()
        self.calls = 0

    def _check(self, subset):
        if self.model.config.compact and len(subset) > self.model.config.M:
            raise ValueError(f"subset of size {len(subset)} exceeds M={self.model.config.M} in compact mode")
        if any(not 0 <= i < self.d for i in subset):
            raise IndexError(f"subset {sorted(subset)} out of range")

    def logderiv_sums(self, subsets):
        """Per-sample ``sum_{i in S} log f'_S(x_i)`` for each subset (cached)."""
        subsets = [frozenset(s) for s in subsets]
        with self._lock:
            todo = list(dict.fromkeys(s for s in subsets if s not in self._ld))
        for s in todo:
            self._check(s)
        if todo:
            per_chunk = max(1, self.chunk_rows // self.K)
            for start in range(0, len(todo), per_chunk):
                group = todo[start:start + per_chunk]
                masks = np.zeros((len(group), self.d), dtype=bool)
                for g, s in enumerate(group):
                    masks[g, sorted(s)] = True
                rows = np.repeat(masks, self.K, axis=0)
                xs = np.tile(self.x, (len(group), 1))
                _, ld = self.model.transform(xs, rows)
                sums = ld.sum(axis=1).reshape(len(group), self.K)
                with self._lock:
                    for g, s in enumerate(group):
                        self._ld[s] = sums[g]
        with self._lock:
            return [self._ld[s] for s in subsets]

    def estimate(self, target, cond):
        return self.estimates(target, [cond])[0]

    def estimates(self, target, conds):
        conds = [frozenset(c) for c in conds]
        for c in conds:
            if target in c:
                raise ValueError("target must not be in the conditioning set")
        self.calls += len(conds)
        needed = []
        for c in conds:
            needed += [c, c | {target}]
        sums = self.logderiv_sums(needed)
        out = []
        for i, c in enumerate(conds):
            diff = sums[2 * i] - sums[2 * i + 1]
            se = float(np.std(diff, ddof=1) / math.sqrt(self.K)) if self.K > 1 else 0.0
            out.append(EntropyEstimate(GAUSS_CONST + float(np.mean(diff)), se, self.K, c, target))
        return out

    def __call__(self, target, cond):
        return self.estimate(target, cond).value

    def entropies(self, target, conds):
        return [e.value for e in self.estimates(target, conds)]


def estimate_cond_entropy(model, data, target, cond, K=1000, seed=0):
    return FansScorer(model, data, K, seed).estimate(target, cond)


def batch_candidate_scores(model, data, target, base_set, candidates, K=1000, seed=0, scorer=None):
    """``H(target | base + {c})`` for every candidate, all on one shared sample set."""
    base = frozenset(base_set)
    candidates = list(candidates)
    bad = [c for c in candidates if c in base or c == target]
    if bad:
        raise ValueError(f"candidates overlap base set or target: {bad}")
    if not candidates:
        return {}
    scorer = scorer or FansScorer(model, data, K, seed)
    ests = scorer.estimates(target, [base | {c} for c in candidates])
    return dict(zip(candidates, ests))
