import math

import numpy as np
import pytest

from fansmb.estimator import (FansScorer, batch_candidate_scores, estimate_cond_entropy, eval_indices)
from fansmb.fans import build_model
from fansmb.fans.train import TrainConfig, train
from fansmb.gauss import GaussianScorer
from fansmb.graph import Dag
from fansmb.synth import analytic_covariance, simulate_linear_sem

CHAIN = Dag(4, {(0, 1), (1, 2)})
WEIGHTS = {(0, 1): 1.2, (1, 2): -0.9}


def _fit(seed, n=2000, epochs=300):
    ds = simulate_linear_sem(CHAIN, WEIGHTS, n, seed=seed)
    model, _ = train(build_model(4, seed=seed), ds, TrainConfig(epochs=epochs, seed=seed))
    return model, ds


@pytest.fixture(scope="module")
def fitted():
    return _fit(0)


def test_eval_indices():
    a = eval_indices(100, 30, 1)
    assert len(set(a)) == 30 and np.array_equal(a, eval_indices(100, 30, 1))
    assert len(eval_indices(10, 25, 0)) == 25
    with pytest.raises(ValueError):
        eval_indices(10, 0, 0)


def test_deterministic_with_full_sample(fitted):
    model, ds = fitted
    a = estimate_cond_entropy(model, ds, 0, {1}, K=len(ds.data), seed=3)
    b = estimate_cond_entropy(model, ds, 0, {1}, K=len(ds.data), seed=3)
    assert a == b
    assert a.K == len(ds.data) and a.std_error >= 0


def test_batch_matches_scalar(fitted):
    model, ds = fitted
    sc = FansScorer(model, ds, K=400, seed=2)
    batch = batch_candidate_scores(model, ds, 0, {2}, [1, 3], scorer=sc)
    for c, est in batch.items():
        single = estimate_cond_entropy(model, ds, 0, {2, c}, K=400, seed=2)
        assert est.value == single.value and est.std_error == single.std_error
    one = batch_candidate_scores(model, ds, 0, set(), [1], K=400, seed=2)
    assert one[1].value == estimate_cond_entropy(model, ds, 0, {1}, K=400, seed=2).value


def test_empty_candidates_and_overlap(fitted):
    model, ds = fitted
    assert batch_candidate_scores(model, ds, 0, {1}, []) == {}
    with pytest.raises(ValueError):
        batch_candidate_scores(model, ds, 0, {1}, [1])
    with pytest.raises(ValueError):
        estimate_cond_entropy(model, ds, 0, {0})


def test_difference_form_equals_two_expectations(fitted):
    model, ds = fitted
    sc = FansScorer(model, ds, K=500, seed=1)
    ld_s, ld_ts = sc.logderiv_sums([{1}, {0, 1}])
    two = 0.5 * (1 + math.log(2 * math.pi)) + ld_s.mean() - ld_ts.mean()
    assert sc(0, {1}) == pytest.approx(two, abs=1e-12)


def test_close_to_gaussian_oracle(fitted):
    model, ds = fitted
    g = GaussianScorer(analytic_covariance(CHAIN, WEIGHTS, np.ones(4)))
    sc = FansScorer(model, ds, K=1000, seed=0)
    for t, s in [(0, ()), (0, (1,)), (1, (0, 2)), (2, (1,)), (3, ()), (3, (0, 1, 2))]:
        assert abs(sc(t, s) - g(t, s)) < 0.1, (t, s)


def test_true_member_beats_noise_over_seeds():
    gaps = []
    for seed in range(5):
        model, ds = _fit(seed, n=1000, epochs=150)
        est = batch_candidate_scores(model, ds, 0, set(), [1, 3], K=1000, seed=seed)
        gaps.append(est[3].value - est[1].value)
    assert np.mean(gaps) > 0


def test_shared_samples_reduce_difference_variance(fitted):
    model, ds = fitted
    shared, indep = [], []
    for s in range(30):
        a = FansScorer(model, ds, K=200, seed=s)
        b = FansScorer(model, ds, K=200, seed=1000 + s)
        shared.append(a(0, {1}) - a(0, {3}))
        indep.append(a(0, {1}) - b(0, {3}))
    assert np.var(shared) < np.var(indep)


def test_compact_size_limit():
    model = build_model(5, M=3, compact=True)
    sc = FansScorer(model, np.zeros((10, 5)), K=5)
    with pytest.raises(ValueError):
        sc(0, {1, 2, 3})
