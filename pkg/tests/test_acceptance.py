"""End-to-end acceptance suite: one test per criterion, each recorded for the summary."""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import record
from fansmb.bounds import build_reports, correlation, gauss_ratio_bound, verify_bounds
from fansmb.cli import main
from fansmb.estimator import FansScorer
from fansmb.fans import build_model
from fansmb.fans.masking import FansConfig, SubsetOrder, compact_rescale, resolve_collisions
from fansmb.fans.model import FansModel
from fansmb.fans.train import TrainConfig, train
from fansmb.gauss import GaussianScorer
from fansmb.graph import all_markov_boundaries
from fansmb.greedy import SearchConfig, discover_all
from fansmb.metrics import avep, evaluate_run, f1, ndcg
from fansmb.seeding import child_seed
from fansmb.synth import analytic_covariance, sample_er_dag, sample_sem_weights, simulate_gp_sem, simulate_linear_sem

H_STD = 0.5 * (1 + math.log(2 * math.pi))


def test_criterion_1_oracle_soundness(capsys):
    t0 = time.perf_counter()
    code = main(["oracle-check", "--d", "6", "--trials", "50", "--seed", "0"])
    took = time.perf_counter() - t0
    out = capsys.readouterr().out
    ok = code == 0 and "300/300" in out and took < 30
    record(1, ok, f"{out.strip()} in {took:.1f}s")
    assert ok, out


def test_criterion_2_brute_force_minimizer():
    t0 = time.perf_counter()
    checked = 0
    worst = 0.0
    for seed in range(20):
        dag = sample_er_dag(6, 2, 1000 + seed)
        sc = GaussianScorer(analytic_covariance(dag, sample_sem_weights(dag, 2000 + seed), np.ones(6)))
        for t, mb in all_markov_boundaries(dag).items():
            others = [j for j in range(6) if j != t]
            h_mb = sc(t, mb)
            for r in range(len(others) + 1):
                for s in itertools.combinations(others, r):
                    h = sc(t, s)
                    assert h >= h_mb - 1e-9
                    if mb <= set(s):
                        worst = max(worst, abs(h - h_mb))
                    checked += 1
    took = time.perf_counter() - t0
    ok = worst <= 1e-9 and took < 60
    record(2, ok, f"{checked} subsets, max superset deviation {worst:.1e}, {took:.1f}s")
    assert ok


def test_criterion_3_linear_d30():
    t0 = time.perf_counter()
    f1s, ndcgs = [], []
    for seed in range(5):
        ss = np.random.SeedSequence(child_seed(seed, "datagen")).generate_state(4)
        dag = sample_er_dag(30, 1, int(ss[0]))
        w = sample_sem_weights(dag, int(ss[2]))
        ds = simulate_linear_sem(dag, w, 1000, seed=int(ss[3]))
        mb, _ = discover_all(30, GaussianScorer.from_dataset(ds), SearchConfig.defaults_for(30))
        _, mean = evaluate_run(mb, dag)
        f1s.append(mean.f1)
        ndcgs.append(mean.ndcg)
    took = time.perf_counter() - t0
    f1m, nm = float(np.mean(f1s)), float(np.mean(ndcgs))
    ok = f1m >= 0.95 and nm >= 0.95 and took < 120
    record(3, ok, f"mean F1 {f1m:.3f}, mean nDCG {nm:.3f} (need >= 0.95), {took:.1f}s")
    assert ok, (f1s, ndcgs)


# -- flow property suite (criterion 5, also the fallback for criterion 4) --------

def _jittered(cfg, seed):
    model = FansModel(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    for v in model.params.values():
        v += rng.normal(0, 0.3, v.shape)
    return model


def _gradient_check():
    model = _jittered(FansConfig(d=3, M=3, output_blocks=3), 0)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 3))
    masks = rng.random((6, 3)) < 0.7
    masks[:, 2] = True
    _, grads = model.loss_and_grad(x, masks)
    ana, fd = [], []
    h = 1e-6
    for name, v in model.params.items():
        flat = v.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = model.loss_and_grad(x, masks)[0]
            flat[i] = old - h
            lm = model.loss_and_grad(x, masks)[0]
            flat[i] = old
            fd.append((lp - lm) / (2 * h))
            ana.append(grads[name].reshape(-1)[i])
    ana, fd = np.array(ana), np.array(fd)
    return float(np.linalg.norm(ana - fd) / np.linalg.norm(fd))


def _sparsity_check(pairs=200):
    model = _jittered(FansConfig(d=7, M=7, output_blocks=4), 3)
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(pairs):
        k = int(rng.integers(1, 8))
        subset = np.sort(rng.choice(7, k, replace=False))
        mask = np.zeros(7, bool)
        mask[subset] = True
        x = rng.normal(size=(1, 7))
        u0, l0 = model.transform(x, mask)
        j = int(rng.integers(7))
        xp = x.copy()
        xp[0, j] += 1.0 + rng.random()
        u1, l1 = model.transform(xp, mask)
        if j not in subset:
            bad += not (np.array_equal(u0, u1) and np.array_equal(l0, l1))
        else:
            earlier = subset[subset < j]
            bad += not (np.array_equal(u0[0, earlier], u1[0, earlier]) and np.array_equal(l0[0, earlier], l1[0, earlier]))
    return bad


def _logdet_check(trials=20):
    worst = 0.0
    rng = np.random.default_rng(5)
    for trial in range(trials):
        model = _jittered(FansConfig(d=5, M=5, output_blocks=3, flow_layers=1 + trial % 2), trial)
        k = int(rng.integers(1, 6))
        subset = np.sort(rng.choice(5, k, replace=False))
        mask = np.zeros(5, bool)
        mask[subset] = True
        x = rng.normal(size=(1, 5))
        ld = model.transform(x, mask)[1][0].sum()
        jac = np.zeros((k, k))
        for c, j in enumerate(subset):
            xp, xm = x.copy(), x.copy()
            xp[0, j] += 1e-5
            xm[0, j] -= 1e-5
            jac[:, c] = (model.transform(xp, mask)[0][0, subset] - model.transform(xm, mask)[0][0, subset]) / 2e-5
        logdet = np.linalg.slogdet(jac)[1]
        worst = max(worst, abs(logdet - ld) / max(1.0, abs(ld)))
    return worst


def _rescale_check():
    return (compact_rescale(SubsetOrder((2, 3, 5)), M=3, d=5).indices == (1, 2, 3)
            and resolve_collisions([1, 1, 2, 6, 6], M=7) == [1, 2, 3, 5, 6])


def flow_property_suite():
    grad = _gradient_check()
    leaks = _sparsity_check()
    logdet = _logdet_check()
    rescale = _rescale_check()
    ok = grad < 1e-4 and leaks == 0 and logdet < 1e-6 and rescale
    detail = (f"grad rel err {grad:.1e}, sparsity/zero-leak violations {leaks}/200, "
              f"logdet rel err {logdet:.1e}, rescale examples {'ok' if rescale else 'wrong'}")
    return ok, detail


def test_criterion_5_flow_properties():
    ok, detail = flow_property_suite()
    record(5, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_4_nonlinear_gp():
    t0 = time.perf_counter()
    f1s = []
    for seed in range(3):
        ss = np.random.SeedSequence(child_seed(seed, "datagen")).generate_state(4)
        dag = sample_er_dag(10, 1, int(ss[0]))
        ds = simulate_gp_sem(dag, 1000, seed=int(ss[3])).standardize()
        model, _ = train(build_model(10, seed=child_seed(seed, "init")), ds, TrainConfig(epochs=2000, seed=seed))
        scorer = FansScorer(model, ds, K=1000, seed=child_seed(seed, "mceval"))
        mb, _ = discover_all(10, scorer, SearchConfig.defaults_for(10, M=model.config.M))
        f1s.append(evaluate_run(mb, dag)[1].f1)
    took = time.perf_counter() - t0
    mean_f1 = float(np.mean(f1s))
    primary = mean_f1 >= 0.70 and took <= 45 * 60
    if primary:
        ok, detail = True, f"mean F1 {mean_f1:.3f} over 3 seeds, {took / 60:.1f} min"
    else:
        fb_ok, fb = flow_property_suite()
        ok = fb_ok and took <= 45 * 60
        detail = (f"primary target missed (mean F1 {mean_f1:.3f} < 0.70, per seed "
                  f"{', '.join(f'{v:.2f}' for v in f1s)}, {took / 60:.1f} min); "
                  f"fallback property suite {'passed' if fb_ok else 'FAILED'}: {fb}")
    record(4, ok, detail)
    assert ok, detail


def test_criterion_6_estimator_calibration():
    t0 = time.perf_counter()
    x = np.random.default_rng(0).normal(size=(2000, 2))
    m, _ = train(build_model(2, seed=0), x, TrainConfig(epochs=2000, seed=0))
    h_cond = FansScorer(m, x, K=1000, seed=0)(0, {1})
    x2 = 2.0 * np.random.default_rng(1).normal(size=(2000, 2))
    m2, _ = train(build_model(2, seed=1), x2, TrainConfig(epochs=2000, seed=1))
    h_marg = FansScorer(m2, x2, K=1000, seed=1)(0, set())
    took = time.perf_counter() - t0
    target_marg = 0.5 * math.log(2 * math.pi * math.e * 4)
    ok = abs(h_cond - H_STD) < 0.05 and abs(h_marg - target_marg) < 0.05 and took < 600
    record(6, ok, f"H(X0|X1) {h_cond:.4f} vs {H_STD:.5f}; H(X0) sigma=2 {h_marg:.4f} vs {target_marg:.5f}; "
                  f"{took:.0f}s")
    assert ok


def test_criterion_7_bounds():
    passed = total = 0
    for run in range(10):
        dag = sample_er_dag(10, 2, 500 + run)
        cov = analytic_covariance(dag, sample_sem_weights(dag, 600 + run), np.ones(10))
        _, results = discover_all(10, GaussianScorer(cov), SearchConfig())
        reps = build_reports(cov, {t: r.mb_plus for t, r in results.items()}, all_markov_boundaries(dag),
                             N=1000, gamma=1.0, delta_e=0.01, mode="exact")
        for rep in reps:
            total += 1
            passed += verify_bounds(rep).passed
    interlace_bad = 0
    rng = np.random.default_rng(0)
    for trial in range(200):
        d = int(rng.integers(2, 9))
        a = rng.normal(size=(d, d + 2))
        C = correlation(a @ a.T)
        kp = int(rng.integers(1, d // 2 + 1))
        interlace_bad += gauss_ratio_bound(C, kp, "interlacing")[0] > gauss_ratio_bound(C, kp, "exact")[0] + 1e-12
    ok = passed == total and interlace_bad == 0
    record(7, ok, f"{passed}/{total} targets pass all clauses; interlacing > exact on {interlace_bad}/200 matrices")
    assert ok


def _pipeline(root, workers):
    data = root / "gen"
    steps = [
        ["generate", "--d", "6", "--degree", "1.5", "--sem", "gp", "--noise", "mixed", "--n", "300",
         "--seed", "7", "--out", str(data)],
        ["train", "--data", str(data / "data.csv"), "--epochs", "15", "--standardize", "--seed", "7",
         "--out", str(root / "model")],
        ["discover", "--data", str(data / "data.csv"), "--scorer", "fans", "--standardize", "--checkpoint",
         str(root / "model" / "model.fans"), "--K", "200", "--seed", "7", "--workers", str(workers),
         "--bounds", "--truth", str(data / "dag.csv"), "--out", str(root / "fans")],
        ["discover", "--data", str(data / "data.csv"), "--seed", "7", "--workers", str(workers),
         "--out", str(root / "gauss")],
        ["evaluate", "--pred", str(root / "fans" / "mb.json"), "--truth", str(data / "dag.csv"),
         "--out", str(root / "fans")],
        ["moral", "--pred", str(root / "fans" / "mb.json"), "--out", str(root / "fans")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(tmp_path, capsys):
    runs = [_pipeline(tmp_path / name, w) for name, w in (("a", 1), ("b", 1), ("c", 8))]
    capsys.readouterr()
    same = runs[0] == runs[1] == runs[2]
    record(8, same, f"{len(runs[0])} output files byte-identical across 2 runs and workers 1/8" if same
           else "outputs differ")
    assert same
    assert "fans/mb.json" in runs[0] and "model/model.fans" in runs[0]


def test_criterion_9_metric_examples():
    vals = (ndcg([3, 1, 2], {1, 2}), avep([3, 1, 2], {1, 2}), f1({1, 2, 3}, {1, 2}))
    expected = ((1 / math.log2(3) + 0.5) / (1 + 1 / math.log2(3)), 0.5 * (0.5 + 2 / 3), 0.8)
    ok = all(abs(v - e) <= 1e-9 for v, e in zip(vals, expected))
    ok = ok and abs(vals[0] - 0.69342) < 1e-5 and abs(vals[1] - 0.58333) < 1e-5
    record(9, ok, "nDCG {:.5f}, AveP {:.5f}, F1 {:.5f}".format(*vals))
    assert ok
