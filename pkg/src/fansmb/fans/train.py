"""Masked maximum-likelihood training with Adam."""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..seeding import stream
from .masking import default_batch_size, sample_leaf_masks
from .model import TrainingDivergence

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 5000
    lr: float = 1e-3
    batch_size: int = None
    seed: int = 0
    early_stop_window: int = 200
    early_stop_tol: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _should_stop(trace, window, tol):
    if not window or tol is None or len(trace) < 2 * window:
        return False
    recent = np.mean(trace[-window:])
    before = np.mean(trace[-2 * window:-window])
    return before - recent < tol


def train(model, dataset, cfg=None, callback=None):
    """Fit ``model`` in place on random leaf masks; returns ``(model, trace)``.

    ``trace`` holds the per-epoch mean negative log-likelihood. Training stops
    early once the mean over the last ``early_stop_window`` epochs improves on
    the preceding window by less than ``early_stop_tol``.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(getattr(dataset, "data", dataset), dtype=np.float64)
    n, d = x.shape
    if d != model.config.d:
        raise ValueError(f"dataset has {d} columns, model expects {model.config.d}")
    bs = min(cfg.batch_size or default_batch_size(d), n)
    rng = stream(cfg.seed, "masksample")
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    trace = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, bs)):
            idx = perm[start:start + bs]
            masks = sample_leaf_masks(d, model.config.M, len(idx), rng)
            loss, grads = model.loss_and_grad(x[idx], masks)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergence(
                    f"non-finite loss at epoch {epoch}, batch {bi}", epoch=epoch, batch=bi, mask=masks)
            opt.step(model.params, grads)
            total += loss * len(idx)
        trace.append(total / n)
        if callback is not None:
            callback(epoch, trace[-1])
        if _should_stop(trace, cfg.early_stop_window, cfg.early_stop_tol):
            log.info("early stop at epoch %d (nll %.5f)", epoch, trace[-1])
            break
    return model, trace
