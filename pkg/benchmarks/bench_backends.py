#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the hot kernels at training-shaped sizes plus one full training
epoch per backend. Run from the repository root:

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from catalog_core import _kernels_numpy
from catalog_core.synth import SynthSpec, generate
from catalog_core.train import TrainConfig, train_epoch
from catalog_core.mlp import init_params, zeros_like_params

try:
    from catalog_core import _kernels_numba

    BACKENDS = {"numpy": _kernels_numpy, "numba": _kernels_numba}
except ImportError:
    BACKENDS = {"numpy": _kernels_numpy}


def time_call(fn, repeats: int) -> float:
    fn()  # warm-up (includes JIT compilation on the numba side)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernels(repeats: int) -> None:
    rng = np.random.default_rng(0)
    activations = rng.normal(size=(48, 1045))
    grad = rng.normal(size=(48, 1045))
    scores = rng.uniform(-1, 1, size=(48, 46))
    labels = rng.integers(0, 46, size=48)
    param = rng.normal(size=(1045, 512))
    velocity = np.zeros_like(param)
    grad_p = rng.normal(size=(1045, 512))

    cases = {
        "gelu_forward (48x1045)": lambda k: k.gelu_forward(activations),
        "gelu_backward (48x1045)": lambda k: k.gelu_backward(activations, grad),
        "softmax_xent (48x46)": lambda k: k.softmax_xent_rows(scores, labels, 0.1),
        "sgd_update (1045x512)": lambda k: k.sgd_momentum_update(param, velocity, grad_p, 0.08, 0.8),
    }
    print(f"{'kernel':<28}" + "".join(f"{name:>12}" for name in BACKENDS))
    for label, call in cases.items():
        row = [f"{label:<28}"]
        for module in BACKENDS.values():
            seconds = time_call(lambda: call(module), repeats)
            row.append(f"{seconds * 1e6:>10.1f}us")
        print("".join(row))


def bench_epoch(repeats: int) -> None:
    import catalog_core.backend as backend

    bundle = generate(SynthSpec(n_train=960, n_val=96, n_test=96, seed=0))
    config = TrainConfig(epochs=1, batch_size=48, mlp_hidden_dims=(1045,), seed=0)
    dims = [bundle.dim_image_text, 1045, bundle.dim_image]

    print(f"\n{'train epoch (960 items)':<28}" + "".join(f"{name:>12}" for name in BACKENDS))
    row = [f"{'':<28}"]
    for name, module in BACKENDS.items():
        backend._kernels = module  # pin the backend under test

        def run():
            params = init_params(dims, dropout_rate=config.dropout_rate, seed=0)
            train_epoch(bundle, "train", params, zeros_like_params(params), config, 0)

        seconds = time_call(run, repeats)
        row.append(f"{seconds * 1e3:>10.1f}ms")
    backend._kernels = None
    print("".join(row))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"backends: {', '.join(BACKENDS)}")
    bench_kernels(args.repeats)
    bench_epoch(max(args.repeats // 2, 1))


if __name__ == "__main__":
    main()
