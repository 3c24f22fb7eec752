"""Closed-form conditional entropy for linear-Gaussian data."""
import math

import numpy as np
from scipy.linalg import lapack

GAUSS_CONST = 0.5 * (1.0 + math.log(2.0 * math.pi))


class SingularMatrixError(np.linalg.LinAlgError):
    """Cholesky failed; ``pivot`` is the 0-based index of the failing leading minor."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


def sample_covariance(data):
    """Unbiased (``1/(N-1)``) covariance of an ``N x d`` array or a Dataset."""
    x = np.asarray(getattr(data, "data", data), dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least two samples for a covariance")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    return 0.5 * (cov + cov.T)


def _potrf(m):
    chol, info = lapack.dpotrf(m, lower=1, clean=1)
    return chol, info


def logdet_psd(m):
    """``log det`` of a positive-definite matrix via Cholesky.

    On the first failure a jitter of ``1e-10 * trace / d`` is added once;
    a second failure raises :class:`SingularMatrixError`.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        return 0.0
    chol, info = _potrf(m)
    if info != 0:
        d = m.shape[0]
        jitter = 1e-10 * max(np.trace(m), 0.0) / d
        chol, info = _potrf(m + jitter * np.eye(d))
        if info != 0:
            raise SingularMatrixError(info - 1 if info > 0 else -1)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def gaussian_cond_entropy(cov, target, cond):
    """``H(target | cond)`` in nats for a Gaussian with covariance ``cov``."""
    cov = np.asarray(cov, dtype=np.float64)
    d = cov.shape[0]
    cond = sorted(int(c) for c in cond)
    if not 0 <= target < d or any(not 0 <= c < d for c in cond):
        raise IndexError("index out of range")
    if target in cond:
        raise ValueError("target must not be in the conditioning set")
    joint = [target] + cond
    ld_joint = logdet_psd(cov[np.ix_(joint, joint)])
    ld_cond = logdet_psd(cov[np.ix_(cond, cond)]) if cond else 0.0
    return GAUSS_CONST + 0.5 * (ld_joint - ld_cond)


class GaussianScorer:
    """Memoized ``H(T | S)`` from a fixed covariance matrix.

    Log-determinants are cached per variable subset so that the shared
    ``log det Sigma_S`` term is computed once across candidates.
    """

    kind = "gaussian"

    def __init__(self, cov):
        self.cov = np.asarray(cov, dtype=np.float64)
        self.d = self.cov.shape[0]
        self._logdets = {}
        self.calls = 0

    @classmethod
    def from_dataset(cls, dataset):
        return cls(sample_covariance(dataset))

    def _logdet(self, subset):
        key = frozenset(subset)
        if key not in self._logdets:
            idx = sorted(key)
            self._logdets[key] = logdet_psd(self.cov[np.ix_(idx, idx)]) if idx else 0.0
        return self._logdets[key]

    def __call__(self, target, cond):
        self.calls += 1
        cond = frozenset(cond)
        if target in cond:
            raise ValueError("target must not be in the conditioning set")
        return GAUSS_CONST + 0.5 * (self._logdet(cond | {target}) - self._logdet(cond))

    def entropies(self, target, conds):
        return [self(target, c) for c in conds]
