"""Synthetic causal benchmarks: Erdos-Renyi DAGs, linear and GP structural equation models."""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .graph import Dag, GraphError

NOISE_FAMILIES = ("gaussian", "uniform", "laplace", "gumbel", "exponential")

_DEFAULT_PARAMS = {
    "gaussian": {"loc": 0.0, "scale": 1.0},
    "uniform": {"low": -1.0, "high": 1.0},
    "laplace": {"loc": 0.0, "scale": 1.0},
    "gumbel": {"loc": 0.0, "scale": 1.0},
    "exponential": {"scale": 1.0},
}


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "gaussian"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}")
        merged = dict(_DEFAULT_PARAMS[self.family])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)} for {self.family} noise")
        merged.update({k: float(v) for k, v in self.params.items()})
        if "scale" in merged and merged["scale"] <= 0:
            raise ValueError("noise scale must be strictly positive")
        if self.family == "uniform" and merged["high"] <= merged["low"]:
            raise ValueError("uniform noise needs high > low")
        object.__setattr__(self, "params", merged)

    def sample(self, rng, n):
        p = self.params
        if self.family == "gaussian":
            return rng.normal(p["loc"], p["scale"], n)
        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], n)
        if self.family == "laplace":
            return rng.laplace(p["loc"], p["scale"], n)
        if self.family == "gumbel":
            return rng.gumbel(p["loc"], p["scale"], n)
        return rng.exponential(p["scale"], n)

    def variance(self):
        p = self.params
        if self.family in ("gaussian",):
            return p["scale"] ** 2
        if self.family == "uniform":
            return (p["high"] - p["low"]) ** 2 / 12.0
        if self.family == "laplace":
            return 2.0 * p["scale"] ** 2
        if self.family == "gumbel":
            return np.pi**2 / 6.0 * p["scale"] ** 2
        return p["scale"] ** 2

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}


@dataclass
class Dataset:
    """``N x d`` sample matrix with column names.

    ``means``/``stds`` hold the pre-standardization column statistics once
    :meth:`standardize` has been applied.
    """

    names: list
    data: np.ndarray
    standardized: bool = False
    means: np.ndarray = None
    stds: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"dataset must be a non-empty 2-D array, got shape {self.data.shape}")
        self.names = [str(n) for n in self.names]
        if len(self.names) != self.data.shape[1]:
            raise ValueError(f"{len(self.names)} names for {self.data.shape[1]} columns")
        if len(set(self.names)) != len(self.names):
            raise ValueError("variable names must be unique")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def standardize(self):
        """Return a copy with zero-mean, unit-variance columns (population std)."""
        means = self.data.mean(axis=0)
        stds = self.data.std(axis=0)
        if np.any(stds == 0):
            bad = [self.names[i] for i in np.flatnonzero(stds == 0)]
            raise ValueError(f"cannot standardize constant columns: {bad}")
        return Dataset(list(self.names), (self.data - means) / stds, True, means, stds)


def default_names(d):
    return [f"X{i}" for i in range(d)]


def sample_er_dag(d, avg_degree, seed):
    """Erdos-Renyi DAG with expected ``d * avg_degree / 2`` edges.

    A random permutation fixes the causal order; each forward pair gets an edge
    independently with probability ``avg_degree / (d - 1)``.
    """
    if d < 2:
        raise GraphError(f"need d >= 2, got {d}")
    if not 0 < avg_degree <= d - 1:
        raise GraphError(f"avg_degree must lie in (0, {d - 1}], got {avg_degree}")
    rng = np.random.default_rng(seed)
    p = avg_degree / (d - 1)
    perm = rng.permutation(d)
    draws = rng.random((d, d)) < p
    edges = set()
    for a in range(d):
        for b in range(a + 1, d):
            if draws[a, b]:
                edges.add((int(perm[a]), int(perm[b])))
    return Dag(d, frozenset(edges))


def sample_sem_weights(dag, seed, low=0.5, high=2.0):
    """Edge weights uniform on ``[-high, -low] U [low, high]``."""
    rng = np.random.default_rng(seed)
    edges = sorted(dag.edges)
    mags = rng.uniform(low, high, len(edges))
    signs = np.where(rng.random(len(edges)) < 0.5, -1.0, 1.0)
    return {e: float(s * m) for e, s, m in zip(edges, signs, mags)}


def _per_node(noise, d):
    if isinstance(noise, NoiseSpec):
        return [noise] * d
    noise = list(noise)
    if len(noise) != d:
        raise ValueError(f"expected {d} noise specs, got {len(noise)}")
    return noise


def _noise_matrix(specs, n, rng):
    return np.column_stack([s.sample(rng, n) for s in specs])


def simulate_linear_sem(dag, weights, n, noise=NoiseSpec(), seed=0, names=None):
    """``X = W^T X + eps`` sampled in topological order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    missing = [e for e in dag.edges if e not in weights]
    if missing:
        raise GraphError(f"missing weight for edge(s) {sorted(missing)}")
    rng = np.random.default_rng(seed)
    eps = _noise_matrix(_per_node(noise, dag.d), n, rng)
    x = np.zeros((n, dag.d))
    for i in dag.order:
        x[:, i] = eps[:, i]
        for p in sorted(dag.parents(i)):
            x[:, i] += weights[(p, i)] * x[:, p]
    return Dataset(names or default_names(dag.d), x)


class GpSamplingError(RuntimeError):
    pass


def rbf_gram(points, bandwidth=1.0):
    sq = cdist(points, points, "sqeuclidean")
    return np.exp(-sq / (2.0 * bandwidth**2))


def _gp_cholesky(gram, jitter=1e-8, max_jitter=1e-4):
    eye = np.eye(gram.shape[0])
    while jitter <= max_jitter * (1 + 1e-12):
        try:
            return np.linalg.cholesky(gram + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise GpSamplingError(f"GP Gram matrix ({gram.shape[0]} points) not positive definite with jitter {max_jitter}")


def gp_function_draw(inputs, rng, bandwidth=1.0, _cache=None):
    """One joint draw of a zero-mean RBF-GP at the rows of ``inputs``.

    Duplicate input rows are drawn once, so they receive identical values.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    uniq, inverse = np.unique(inputs, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    key = None
    if _cache is not None:
        key = (uniq.shape, uniq.tobytes())
        chol = _cache.get(key)
    else:
        chol = None
    if chol is None:
        chol = _gp_cholesky(rbf_gram(uniq, bandwidth))
        if _cache is not None:
            _cache[key] = chol
    f = chol @ rng.standard_normal(uniq.shape[0])
    return f[inverse]


def simulate_gp_sem(dag, n, noise=NoiseSpec(), seed=0, names=None, bandwidth=1.0):
    """``X_i = f_i(X_Pa(i)) + eps_i`` with each ``f_i`` a GP draw (RBF kernel)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    specs = _per_node(noise, dag.d)
    eps = _noise_matrix(specs, n, rng)
    x = np.zeros((n, dag.d))
    cache = {}
    for i in dag.order:
        pa = sorted(dag.parents(i))
        x[:, i] = eps[:, i]
        if pa:
            x[:, i] += gp_function_draw(x[:, pa], rng, bandwidth, cache)
    return Dataset(names or default_names(dag.d), x)


def mixed_noise_specs(d, seed):
    """Per-node family drawn uniformly from the five families, unit parameters."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(NOISE_FAMILIES), d)
    return [NoiseSpec(NOISE_FAMILIES[k]) for k in picks]


def analytic_covariance(dag, weights, noise_vars):
    """Exact covariance ``(I - W)^-T diag(noise_vars) (I - W)^-1`` of a linear SEM."""
    noise_vars = np.broadcast_to(np.asarray(noise_vars, dtype=np.float64), (dag.d,))
    if np.any(noise_vars <= 0):
        raise ValueError("noise variances must be positive")
    w = np.zeros((dag.d, dag.d))
    for e in dag.edges:
        if e not in weights:
            raise GraphError(f"missing weight for edge {e}")
        w[e] = weights[e]
    a = np.eye(dag.d) - w
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise GraphError("I - W is singular; the input is not a DAG") from exc
    sigma = inv.T @ np.diag(noise_vars) @ inv
    return 0.5 * (sigma + sigma.T)
