#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Runs each hot kernel on shapes taken from the real training workload
(8 regions, window 15, ~190 stacked windows) and, if both backends are
importable, a whole single-step model forward+backward via subprocess with
MOBICAST_BACKEND pinned.

Usage: python benchmarks/bench_backends.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mobicast.backend import numpy_kernels

try:
    from mobicast.backend import _ckernels
except ImportError:
    _ckernels = None

B, N, K, H = 190, 8, 15, 32  # training workload scale
PAIR_ROWS = B * N * N


def workload(rng):
    act = rng.uniform(-3, 3, size=(B * N, H))
    grad = rng.uniform(-1, 1, size=(B * N, H))
    adj = rng.uniform(0, 1, size=(B * K * N // K, N))  # one stacked day: (B*N, N)
    feats = rng.uniform(-1, 1, size=(B * N, H))
    gather_idx = np.repeat(np.arange(B * N, dtype=np.int64), N)
    pair_grad = rng.uniform(-1, 1, size=(PAIR_ROWS, H))
    scores = rng.uniform(-2, 2, size=(B, K))
    return {
        "sigmoid_fwd": (act,),
        "tanh_fwd": (act,),
        "leaky_relu_fwd": (act, 0.01),
        "relu_bwd": (act, grad),
        "softmax_rows_fwd": (scores,),
        "block_matmul_fwd": (adj, feats, N),
        "block_matmul_bwd_a": (grad, feats, N),
        "norm_adjacency_fwd": (adj, N),
        "gather_rows_fwd": (act, gather_idx),
        "gather_rows_bwd": (pair_grad, gather_idx, B * N),
        "block_mean_fwd": (act, N),
    }


def time_fn(fn, args, repeats):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_kernels(repeats: int):
    rng = np.random.default_rng(0)
    cases = workload(rng)
    print(f"{'kernel':24s} {'numpy':>12s} {'cython':>12s} {'speedup':>9s}")
    for name, args in cases.items():
        t_np = time_fn(getattr(numpy_kernels, name), args, repeats)
        if _ckernels is None:
            print(f"{name:24s} {t_np * 1e6:10.1f}us {'n/a':>12s}")
            continue
        t_cy = time_fn(getattr(_ckernels, name), args, repeats)
        print(
            f"{name:24s} {t_np * 1e6:10.1f}us {t_cy * 1e6:10.1f}us {t_np / t_cy:8.2f}x"
        )


TRAIN_STEP_SNIPPET = r"""
import time
import numpy as np
from mobicast import data as dt, model as md, train as tr
from mobicast import diffcore as dc
from mobicast.backend import BACKEND_NAME
from mobicast.diffcore import Tensor

panel = dt.synth_generate(dt.SynthConfig(n_regions=8, days=120, seed=0))
cfg = tr.TrainConfig(window=15, seed=0)
mcfg = md.ModelConfig(n_regions=8, window=15)
params = md.init_params(mcfg, 0)
samples = dt.build_windows(panel, 15)
prep = md.prepare_batch([s.input for s in samples], mcfg)
y_case = np.concatenate([s.target_cases for s in samples]).reshape(-1, 1)
y_mob = np.vstack([s.target_mobility for s in samples])
named = params.named_tensors()
state = tr.RmsPropState(named)

def step():
    with dc.Tape():
        core = md._forward_core(params, prep)
        loss = tr.multitask_loss(core.pred_cases, Tensor(y_case),
                                 core.pred_mobility, Tensor(y_mob), 1.0, 1.0, 0.5)
    dc.backward(loss)
    tr.clip_global_norm(named, 5.0)
    tr.rmsprop_step(named, state, 1e-3)
    for t in named.values():
        t.zero_grad()

step()
t0 = time.perf_counter()
for _ in range(5):
    step()
print(f"{BACKEND_NAME}: {(time.perf_counter() - t0) / 5 * 1e3:.1f} ms per full-batch step")
"""


def bench_train_step():
    print("\nfull-batch training step (105 windows, N=8, K=15):")
    for backend in ("numpy", "cython"):
        if backend == "cython" and _ckernels is None:
            print("cython: extension not built")
            continue
        env = dict(os.environ, MOBICAST_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, "-c", TRAIN_STEP_SNIPPET], env=env, capture_output=True, text=True
        )
        print(out.stdout.strip() or out.stderr.strip())


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--skip-train-step", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.repeats)
    if not args.skip_train_step:
        bench_train_step()
