"""Error-bound diagnostics for a finished discovery run.

Two inequality chains are checked per target::

    0 <= H(T | MB+) - H(T | MB) <= delta_e + Delta_N
    1 <= A / A'                 <= 1 / (1 - exp(-lambda_min(C, 2k')))

with ``A = 2 pi e var(T) - exp(2 H(T | MB))`` and ``A'`` the same at ``MB+``.
The ratio chain only applies to linear-Gaussian scoring.
"""
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import eigvalsh

from .gauss import GaussianScorer

EXACT_CAP = 100_000
TOL = 1e-9


def delta_n(N, k, k_prime, gamma=1.0, delta_e=0.01):
    """``log N * (1 - exp(-k' / (k gamma max(log N, log(1/delta_e)))))``.

    ``k = 0`` is taken as the limit ``k -> 0+`` (the bracket tends to 1).
    """
    if N < 1 or gamma <= 0 or not 0 < delta_e < 1 or k < 0 or k_prime < 0:
        raise ValueError("need N >= 1, gamma > 0, 0 < delta_e < 1 and k, k' >= 0")
    log_n = math.log(N)
    if k_prime == 0:
        return 0.0
    if k == 0:
        return log_n
    scale = k * gamma * max(log_n, math.log(1.0 / delta_e))
    return log_n * -math.expm1(-k_prime / scale)


def correlation(cov):
    cov = np.asarray(cov, dtype=np.float64)
    s = np.sqrt(np.diag(cov))
    return cov / np.outer(s, s)


def _ratio_bound(lam):
    if lam <= 0:
        return math.inf
    return 1.0 / -math.expm1(-lam)


def gauss_ratio_bound(C, k_prime, mode="interlacing"):
    """``(lambda_min, 1 / (1 - exp(-lambda_min)))`` over ``2k'``-sized principal submatrices.

    ``interlacing`` uses the smallest eigenvalue of ``C`` itself, a lower
    bound on that of any principal submatrix. ``exact`` enumerates them all
    and refuses when there are more than ``EXACT_CAP``. Sizes above ``d``
    are clamped to ``d``.
    """
    C = np.asarray(C, dtype=np.float64)
    d = C.shape[0]
    if k_prime < 1:
        raise ValueError("k' must be >= 1")
    size = min(2 * k_prime, d)
    if mode == "interlacing":
        lam = float(eigvalsh(C)[0])
    elif mode == "exact":
        count = math.comb(d, size)
        if count > EXACT_CAP:
            raise ValueError(f"exact mode needs {count} submatrices (cap {EXACT_CAP}); use interlacing")
        lam = math.inf
        for idx in itertools.combinations(range(d), size):
            sub = C[np.ix_(idx, idx)]
            lam = min(lam, float(eigvalsh(sub, subset_by_index=[0, 0])[0]))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return lam, _ratio_bound(lam)


@dataclass
class BoundReport:
    target: int
    k: int
    k_prime: int
    N: int
    gamma: float
    delta_e: float
    delta_n: float
    gap: float
    h_plus: float = None
    h_mb: float = None
    ratio: float = None
    lambda_min: float = None
    ratio_bound: float = None

    def to_dict(self):
        out = asdict(self)
        for key, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[key] = str(v)
        return out


@dataclass
class BoundVerdict:
    target: int
    passed: bool
    violations: list = field(default_factory=list)


def verify_bounds(report, tol=TOL):
    """Check both inequality chains; ratio clauses are skipped when absent."""
    bad = []
    if report.gap < -tol:
        bad.append("lower bound")
    if report.gap > report.delta_e + report.delta_n + tol:
        bad.append("upper bound")
    if report.ratio is not None:
        if report.ratio < 1.0 - tol:
            bad.append("ratio lower bound")
        if report.ratio_bound is not None and report.ratio > report.ratio_bound * (1.0 + tol):
            bad.append("ratio upper bound")
    return BoundVerdict(report.target, not bad, bad)


def _amplitude(var, h):
    return 2.0 * math.pi * math.e * var - math.exp(2.0 * h)


def build_reports(cov, mb_plus, truth, N, gamma=1.0, delta_e=0.01, mode="interlacing", scorer=None):
    """One :class:`BoundReport` per target in ``mb_plus``.

    ``truth`` maps target -> reference Markov boundary. Entropies come from
    ``scorer`` when given, else from the Gaussian closed form on ``cov``; the
    ratio chain is only evaluated in the Gaussian case.
    """
    cov = np.asarray(cov, dtype=np.float64)
    ratio = scorer is None or getattr(scorer, "kind", None) == "gaussian"
    scorer = scorer or GaussianScorer(cov)
    C = correlation(cov)
    lam_cache = {}
    reports = []
    for t in sorted(mb_plus):
        plus = list(mb_plus[t])
        ref = list(truth[t])
        h_plus = scorer(t, plus)
        h_mb = scorer(t, ref)
        rep = BoundReport(
            target=t, k=len(ref), k_prime=len(plus), N=int(N), gamma=gamma, delta_e=delta_e,
            delta_n=delta_n(N, len(ref), len(plus), gamma, delta_e), gap=h_plus - h_mb,
            h_plus=h_plus, h_mb=h_mb,
        )
        if ratio and plus:
            a = _amplitude(cov[t, t], h_mb)
            a_prime = _amplitude(cov[t, t], h_plus)
            if a_prime > TOL * cov[t, t]:
                if len(plus) not in lam_cache:
                    lam_cache[len(plus)] = gauss_ratio_bound(C, len(plus), mode)
                rep.lambda_min, rep.ratio_bound = lam_cache[len(plus)]
                rep.ratio = a / a_prime
        reports.append(rep)
    return reports
