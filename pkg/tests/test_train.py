import math

import numpy as np
import pytest

from fansmb.fans import build_model
from fansmb.fans.model import TrainingDivergence
from fansmb.fans.train import Adam, TrainConfig, _should_stop, train

H_STD = 0.5 * (1 + math.log(2 * math.pi))


def _gauss(n, d, seed=0):
    return np.random.default_rng(seed).normal(size=(n, d))


def test_zero_epochs_leaves_parameters():
    model = build_model(3, seed=0)
    before = {k: v.copy() for k, v in model.params.items()}
    _, trace = train(model, _gauss(50, 3), TrainConfig(epochs=0))
    assert trace == []
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


def test_training_is_deterministic():
    x = _gauss(200, 3)
    runs = [train(build_model(3, seed=4), x, TrainConfig(epochs=5, seed=9)) for _ in range(2)]
    (m1, t1), (m2, t2) = runs
    assert t1 == t2
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)
    m3, t3 = train(build_model(3, seed=4), x, TrainConfig(epochs=5, seed=10))
    assert t3 != t1


def test_one_d_gaussian_likelihood_converges():
    x = _gauss(1000, 1)
    model, trace = train(build_model(1, seed=0), x, TrainConfig(epochs=200, seed=0))
    assert trace[-1] < trace[0]
    assert abs(-model.log_likelihood(x, np.ones(1, bool)).mean() - H_STD) < 0.05


@pytest.mark.slow
def test_two_d_independent_gaussian_joint_nll():
    x = _gauss(1000, 2, seed=1)
    model, _ = train(build_model(2, seed=0), x, TrainConfig(epochs=2000, seed=0))
    assert abs(-model.log_likelihood(x, np.ones(2, bool)).mean() - 2 * H_STD) < 0.1


def test_divergence_raises_with_diagnostics():
    model = build_model(2, seed=0)
    model.params["f0.headb"][:] = np.nan
    with pytest.raises(TrainingDivergence) as info:
        train(model, _gauss(100, 2), TrainConfig(epochs=3))
    assert info.value.epoch == 0 and info.value.batch == 0
    assert info.value.mask.shape[1] == 2


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        train(build_model(3), _gauss(10, 2), TrainConfig(epochs=1))


def test_early_stop_rule():
    assert not _should_stop([1.0] * 10, 200, 1e-4)
    flat = [1.0] * 400
    assert _should_stop(flat, 200, 1e-4)
    falling = list(np.linspace(2, 1, 400))
    assert not _should_stop(falling, 200, 1e-4)
    assert not _should_stop(flat, 0, 1e-4)


def test_callback_sees_every_epoch():
    seen = []
    train(build_model(2), _gauss(64, 2), TrainConfig(epochs=3), callback=lambda e, v: seen.append(e))
    assert seen == [0, 1, 2]


def test_adam_first_step_is_lr_sized():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p, lr=0.1)
    opt.step(p, {"w": np.array([5.0, -0.01])})
    # bias-corrected first step moves each coordinate by ~lr against the gradient sign
    np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-6)
