import numpy as np
import pytest

from fansmb.gauss import sample_covariance
from fansmb.graph import Dag, GraphError
from fansmb.synth import (NOISE_FAMILIES, Dataset, NoiseSpec, analytic_covariance, gp_function_draw,
                          mixed_noise_specs, sample_er_dag, sample_sem_weights, simulate_gp_sem,
                          simulate_linear_sem)


def test_er_edge_count_mean():
    counts = [len(sample_er_dag(30, 1.0, s).edges) for s in range(1000)]
    assert abs(np.mean(counts) - 15.0) <= 1.5


def test_er_tiny_degree_is_edgeless():
    assert all(not sample_er_dag(10, 1e-9, s).edges for s in range(20))


def test_er_deterministic_and_validated():
    assert sample_er_dag(12, 2, 7) == sample_er_dag(12, 2, 7)
    with pytest.raises(GraphError):
        sample_er_dag(1, 0.5, 0)
    with pytest.raises(GraphError):
        sample_er_dag(5, 5, 0)


def test_weights_range_and_sign_balance():
    dag = sample_er_dag(200, 100, 0)
    w = np.array(list(sample_sem_weights(dag, 1).values()))
    assert len(w) > 9000
    assert np.all((np.abs(w) >= 0.5) & (np.abs(w) <= 2.0))
    assert 0.47 <= np.mean(w < 0) <= 0.53
    assert sample_sem_weights(Dag(3), 0) == {}


def test_linear_sem_edgeless_identity_cov():
    ds = simulate_linear_sem(Dag(4), {}, 10_000, seed=0)
    assert np.max(np.abs(sample_covariance(ds) - np.eye(4))) < 0.1


def test_linear_sem_single_edge_variance():
    dag = Dag(2, {(0, 1)})
    ds = simulate_linear_sem(dag, {(0, 1): 1.0}, 10_000, seed=3)
    assert abs(ds.data[:, 1].var() - 2.0) / 2.0 < 0.05


def test_linear_sem_deterministic_and_missing_weight():
    dag = sample_er_dag(6, 2, 1)
    w = sample_sem_weights(dag, 2)
    a = simulate_linear_sem(dag, w, 50, seed=4)
    b = simulate_linear_sem(dag, w, 50, seed=4)
    assert np.array_equal(a.data, b.data)
    if dag.edges:
        with pytest.raises(GraphError):
            simulate_linear_sem(dag, {}, 10)


def test_analytic_covariance_examples():
    assert np.allclose(analytic_covariance(Dag(3), {}, np.ones(3)), np.eye(3))
    cov = analytic_covariance(Dag(2, {(0, 1)}), {(0, 1): 1.0}, [1.0, 1.0])
    assert np.allclose(cov, [[1, 1], [1, 2]])


def test_sample_covariance_converges_to_analytic():
    dag = sample_er_dag(5, 2, 11)
    w = sample_sem_weights(dag, 12)
    truth = analytic_covariance(dag, w, np.ones(5))
    errs = [np.max(np.abs(sample_covariance(simulate_linear_sem(dag, w, n, seed=13)) - truth))
            for n in (1_000, 100_000)]
    assert errs[1] < 0.05
    assert errs[1] < errs[0]


def test_gp_root_nodes_are_pure_noise():
    dag = Dag(3, {(0, 1)})
    ds = simulate_gp_sem(dag, 200, NoiseSpec("uniform"), seed=0)
    assert np.all(np.abs(ds.data[:, 0]) <= 1.0)
    assert np.all(np.abs(ds.data[:, 2]) <= 1.0)


def test_gp_duplicate_inputs_equal():
    x = np.array([0.3, -1.2, 0.3, 2.0, -1.2])
    f = gp_function_draw(x, np.random.default_rng(0))
    assert abs(f[0] - f[2]) < 1e-5 and abs(f[1] - f[4]) < 1e-5


def test_gp_marginal_variance_near_one():
    # pointwise variance across independent draws, averaged over points
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2000, 1))
    cache = {}
    draws = np.array([gp_function_draw(x, rng, _cache=cache) for _ in range(300)])
    assert 0.8 <= draws.var(axis=0).mean() <= 1.2


def test_gp_sem_finite():
    dag = sample_er_dag(6, 2, 0)
    ds = simulate_gp_sem(dag, 300, mixed_noise_specs(6, 1), seed=2)
    assert np.all(np.isfinite(ds.data))


def test_noise_families_variance():
    rng = np.random.default_rng(0)
    for fam in NOISE_FAMILIES:
        spec = NoiseSpec(fam)
        x = spec.sample(rng, 200_000)
        assert abs(x.var() - spec.variance()) / spec.variance() < 0.03, fam
    with pytest.raises(ValueError):
        NoiseSpec("gaussian", {"scale": 0.0})
    with pytest.raises(ValueError):
        NoiseSpec("cauchy")


def test_mixed_noise_draws_from_five_families():
    specs = mixed_noise_specs(200, 0)
    assert {s.family for s in specs} == set(NOISE_FAMILIES)


def test_standardize():
    rng = np.random.default_rng(0)
    ds = Dataset(["a", "b"], rng.normal(3, 5, (500, 2))).standardize()
    assert ds.standardized
    assert np.allclose(ds.data.mean(axis=0), 0, atol=1e-10)
    assert np.allclose(ds.data.std(axis=0), 1, rtol=1e-8)
    with pytest.raises(ValueError):
        Dataset(["a"], np.ones((5, 1))).standardize()


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(["a", "a"], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Dataset(["a"], np.array([[np.nan]]))
