"""Score-based dynamic weight masks for the any-subset conditioner.

Every node carries an integer score. Input and output nodes are scored by the
(1-based) position of their variable, hidden nodes cycle through
``1..n_scores``. For a subset ``S`` with increasing positions
``[i_1, ..., i_k]`` only hidden nodes whose score is in ``{i_1..i_{k-1}}``
are active, a connection ``lower -> upper`` exists iff
``score(lower) <= score(upper)``, and into the output layer the inequality
is strict. In compact mode positions are first rescaled onto ``1..M-1``.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class FansConfig:
    d: int
    M: int
    hidden_layers: int = 1
    blocks_per_hidden: int = 6
    output_blocks: int = 20
    compact: bool = False
    dsf_dim: int = 4
    flow_layers: int = 1
    hidden_block_size: int = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 1 <= self.M <= self.d:
            raise ValueError(f"M must lie in [1, d={self.d}], got {self.M}")
        if self.d >= 2 and self.M < 2:
            raise ValueError("M must be >= 2 when d >= 2")
        if self.blocks_per_hidden < 1 or self.output_blocks < 1:
            raise ValueError("block counts must be >= 1")
        if self.dsf_dim < 1 or self.flow_layers < 1 or self.hidden_layers < 0:
            raise ValueError("dsf_dim and flow_layers must be >= 1, hidden_layers >= 0")
        if self.hidden_block_size is not None and self.hidden_block_size < 1:
            raise ValueError("hidden_block_size must be >= 1")

    @classmethod
    def defaults_for(cls, d, **overrides):
        """Reference hyperparameter schedule, keyed on ``d``."""
        if d <= 20:
            M = min(d, max(2, d - 1)) if d >= 2 else 1
        elif d < 100:
            M = 20
        else:
            M = 30
        cfg = dict(d=d, M=M, hidden_layers=1, blocks_per_hidden=6,
                   output_blocks=20 if d < 100 else 16, compact=d >= 100, dsf_dim=4, flow_layers=1)
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**cfg)

    @property
    def n_scores(self):
        return max((self.M if self.compact else self.d) - 1, 1)

    @property
    def block_size(self):
        if self.hidden_block_size is not None:
            return self.hidden_block_size
        return 2 * self.M if self.compact else self.n_scores

    @property
    def hidden_size(self):
        return self.blocks_per_hidden * self.block_size

    def to_dict(self):
        return asdict(self)


def default_batch_size(d):
    return 64 if d < 100 else 256


@dataclass(frozen=True)
class SubsetOrder:
    """Strictly increasing 1-based positions of a subset."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"subset order must be strictly increasing, got {idx}")
        if idx and idx[0] < 1:
            raise ValueError("positions are 1-based")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def build_subset_order(subset, d):
    subset = {int(i) for i in subset}
    if not subset:
        raise ValueError("empty subset has no order (handle S = {} analytically)")
    if any(not 0 <= i < d for i in subset):
        raise IndexError(f"subset {sorted(subset)} out of range for d={d}")
    return SubsetOrder(tuple(i + 1 for i in sorted(subset)))


def compact_rescale(order, M, d):
    """Map positions from ``1..d`` onto ``1..M-1`` and resolve collisions.

    Each position ``i`` becomes ``ceil((M-1) * i / (d-1))``. Duplicates are
    pushed apart greedily: a left-to-right pass raises repeated values (never
    above ``M-1``), then a right-to-left pass lowers values that still collide.
    Only if the range is exhausted is the last element allowed to reach ``M``.
    """
    idx = list(order.indices if isinstance(order, SubsetOrder) else order)
    n = len(idx)
    if n > M:
        raise ValueError(f"subset of size {n} cannot be rescaled to M={M}")
    if any(i > d for i in idx):
        raise IndexError(f"position exceeds d={d}")
    if n == 0 or d == 1:
        return SubsetOrder(tuple(idx))
    r = [math.ceil((M - 1) * i / (d - 1)) for i in idx]
    return SubsetOrder(tuple(resolve_collisions(r, M)))


def resolve_collisions(scores, M):
    """Make rescaled scores strictly increasing, filling gaps from both sides."""
    r = list(scores)
    n = len(r)
    if n > M:
        raise ValueError(f"{n} scores cannot be made distinct within M={M}")
    top = M - 1
    for j in range(1, n):
        if r[j] <= r[j - 1]:
            r[j] = max(r[j], min(r[j - 1] + 1, top))
    for j in range(n - 2, -1, -1):
        if r[j] >= r[j + 1]:
            r[j] = r[j + 1] - 1
    if n and r[0] < 1:
        r[0] = 1
        for j in range(1, n):
            r[j] = max(r[j], r[j - 1] + 1)
    return r


def hidden_scores(config):
    block = (np.arange(config.block_size) % config.n_scores) + 1
    return np.tile(block, config.blocks_per_hidden).astype(np.int64)


def position_scores(masks, config):
    """Per-sample score of every variable: ``(B, d)`` int array.

    Selected variables get their (possibly rescaled) position; unselected ones
    get 0. Non-compact scores are simply ``i + 1``.
    """
    masks = np.asarray(masks, dtype=bool)
    d = config.d
    if not config.compact:
        return np.where(masks, np.arange(1, d + 1)[None, :], 0).astype(np.int64)
    out = np.zeros(masks.shape, dtype=np.int64)
    cache = {}
    for b in range(masks.shape[0]):
        cols = np.flatnonzero(masks[b])
        if cols.size == 0:
            continue
        key = cols.tobytes()
        r = cache.get(key)
        if r is None:
            r = cache[key] = np.array(compact_rescale(cols + 1, config.M, d).indices, dtype=np.int64)
        out[b, cols] = r
    return out


@dataclass
class LayerScores:
    """Everything the conditioner needs to mask one batch.

    ``input`` and ``output`` are ``(d,)`` when every row shares the same
    scores (non-compact mode) and ``(B, d)`` otherwise.
    """

    masks: np.ndarray
    input: np.ndarray
    output: np.ndarray
    hidden: np.ndarray
    hidden_active: np.ndarray


def batch_scores(masks, config):
    masks = np.atleast_2d(np.asarray(masks, dtype=bool))
    if masks.shape[1] != config.d:
        raise ValueError(f"mask width {masks.shape[1]} does not match d={config.d}")
    pos = position_scores(masks, config)
    hs = hidden_scores(config)
    # active hidden scores: positions of all selected variables except the last one
    last = np.where(masks.any(axis=1), pos.max(axis=1), 0)
    carried = np.where(pos < last[:, None], pos, 0)
    lookup = np.zeros((masks.shape[0], max(int(hs.max()), int(pos.max(initial=0))) + 2), dtype=bool)
    rows = np.repeat(np.arange(masks.shape[0]), config.d)
    lookup[rows, carried.reshape(-1)] = True
    lookup[:, 0] = False
    active = lookup[:, hs]
    if config.compact:
        # unselected inputs carry zeros; give them an unreachable score
        inp = np.where(masks, pos, np.iinfo(np.int32).max)
        out = pos
    else:
        inp = out = np.arange(1, config.d + 1, dtype=np.int64)
    return LayerScores(masks, inp, out, hs, active)


@dataclass
class MaskSet:
    """Explicit binary connectivity for one subset (``rows = upper layer``)."""

    order: SubsetOrder
    input_scores: np.ndarray
    hidden_scores: np.ndarray
    output_scores: np.ndarray
    layers: list
    heads_active: np.ndarray

    def effective_connectivity(self):
        """Boolean ``(d, d)``: ``[i, j]`` true iff output ``i`` can see input ``j``."""
        reach = None
        for m in self.layers:
            m = m.astype(np.int64)
            reach = m if reach is None else (m @ reach > 0).astype(np.int64)
        ob = reach.reshape(-1, self.input_scores.shape[0], reach.shape[1])
        return (ob.sum(axis=0) > 0)


def build_masks(order, config):
    """Binary per-layer masks for a single subset.

    ``order`` holds 1-based positions (before any compact rescaling).
    """
    d = config.d
    mask = np.zeros(d, dtype=bool)
    mask[np.asarray(order.indices, dtype=np.int64) - 1] = True
    sc = batch_scores(mask[None, :], config)
    pos = position_scores(mask[None, :], config)[0]
    inp_sel = mask
    hid_sel = sc.hidden_active[0]
    hs = sc.hidden
    inp = np.where(mask, pos, 0)
    ob_scores = np.tile(pos, config.output_blocks)
    ob_sel = np.tile(mask, config.output_blocks)
    layers = []
    lower_scores, lower_sel = inp, inp_sel
    for _ in range(config.hidden_layers):
        m = (lower_scores[None, :] <= hs[:, None]) & lower_sel[None, :] & hid_sel[:, None]
        layers.append(m)
        lower_scores, lower_sel = hs, hid_sel
    m = (lower_scores[None, :] < ob_scores[:, None]) & lower_sel[None, :] & ob_sel[:, None]
    layers.append(m)
    return MaskSet(order, inp, hs, ob_scores, layers, mask.copy())


def sample_leaf_mask(d, M, seed):
    """Binary mask whose size is uniform on ``1..M`` and members uniform."""
    if not 1 <= M <= d:
        raise ValueError(f"need 1 <= M <= d, got M={M}, d={d}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return sample_leaf_masks(d, M, 1, rng)[0]


def sample_leaf_masks(d, M, n, rng):
    sizes = rng.integers(1, M + 1, n)
    ranks = np.argsort(rng.random((n, d)), axis=1).argsort(axis=1)
    return (ranks < sizes[:, None]).astype(np.float64)
