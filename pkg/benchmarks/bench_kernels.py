"""Compare the numba kernels with their pure-numpy fallbacks.

Kernel timings call both implementations directly in one process. The
end-to-end row trains a small model in two subprocesses, one with
``FANSMB_DISABLE_NUMBA=1``.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--skip-train]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fansmb.fans import kernels as K
from fansmb.fans.masking import FansConfig, batch_scores, sample_leaf_masks

TRAIN_SNIPPET = """
import time, numpy as np
from fansmb.fans import build_model
from fansmb.fans.train import TrainConfig, train
x = np.random.default_rng(0).normal(size=(1000, 10))
train(build_model(10), x[:64], TrainConfig(epochs=1))  # compile / warm caches
t = time.perf_counter()
train(build_model(10), x, TrainConfig(epochs=5, early_stop_window=0))
print(time.perf_counter() - t)
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(batch=256, d=30):
    rng = np.random.default_rng(0)
    k = 4
    x = rng.normal(size=(batch, d))
    p = rng.normal(size=(batch, d, 3 * k))
    gu, gld = rng.normal(size=(2, batch, d))
    cfg = FansConfig(d=d, M=20)
    sc = batch_scores(sample_leaf_masks(d, cfg.M, batch, rng), cfg)
    w = rng.normal(size=(cfg.hidden_size, d))
    bias = np.zeros(cfg.hidden_size)
    sin, sout = np.ascontiguousarray(np.broadcast_to(sc.input, (batch, d))), sc.hidden
    sout = np.ascontiguousarray(np.broadcast_to(sout, (batch, sout.shape[-1])))
    delta = rng.normal(size=(batch, cfg.hidden_size))
    return {
        "dsf forward": (lambda: K.dsf_forward_nb(x, p, k), lambda: K.dsf_forward_np(x, p, k)),
        "dsf backward": (lambda: K.dsf_backward_nb(x, p, k, gu, gld), lambda: K.dsf_backward_np(x, p, k, gu, gld)),
        "masked linear": (lambda: K.masked_linear_nb(x, w, bias, sin, sout, False),
                          lambda: K.masked_linear_np(x, w, bias, sin, sout, False)),
        "masked linear backward": (lambda: K.masked_linear_backward_nb(delta, x, w, sin, sout, False),
                                   lambda: K.masked_linear_backward_np(delta, x, w, sin, sout, False)),
    }


def train_seconds(disable):
    env = dict(os.environ, FANSMB_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args(argv)
    if not K.use_numba():
        print("numba is disabled or missing; only the numpy path can be timed")
        return 1
    print(f"{'case':<26}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (nb, npy) in kernel_cases().items():
        nb()  # JIT compile outside the timed region
        t_nb, t_np = best(nb, args.repeat), best(npy, args.repeat)
        print(f"{name:<26}{1e3 * t_nb:>10.2f}{1e3 * t_np:>10.2f}{t_np / t_nb:>8.1f}x")
    if not args.skip_train:
        t_nb, t_np = train_seconds(False), train_seconds(True)
        print(f"{'train 5 epochs d=10':<26}{1e3 * t_nb:>10.0f}{1e3 * t_np:>10.0f}{t_np / t_nb:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
