"""Timing comparison of the compiled extension backend against the pure
Python fallback on the kernels that dominate a run (forward pass, one
training step) and on a short end-to-end adaptation.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import contextlib
import time

import numpy as np

import pppl.nn.backends as backends
from pppl.adapt import AdaptConfig, ClassProportions, TrainConfig, adapt, pretrain_source
from pppl.data import gen_rotated_gaussians
from pppl.nn import Batch, available_backends, forward, init_model, one_hot
from pppl.nn.backends import train_step
from pppl.nn.model import make_optimizer

DIMS = [32, 64, 32, 4]


def timeit(fn, repeats):
    """Median wall time of ``fn`` over ``repeats`` calls (after one warmup)."""
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def bench_forward(backend_name, batch_size, repeats):
    rng = np.random.default_rng(7)
    model = init_model(DIMS, seed=0)
    x = rng.normal(0, 1, size=(batch_size, DIMS[0])).astype(np.float32)
    return timeit(lambda: forward(model, x, backend=backend_name), repeats)


def bench_train_step(backend_name, batch_size, repeats):
    rng = np.random.default_rng(7)
    model = init_model(DIMS, seed=0)
    opt = make_optimizer(model, 0.001, 0.9)
    batch = Batch(rng.normal(0, 1, size=(batch_size, DIMS[0])),
                  one_hot(rng.integers(0, DIMS[-1], size=batch_size), DIMS[-1]),
                  np.ones(batch_size))
    return timeit(
        lambda: train_step(model, batch, "mse", opt, backend=backend_name),
        repeats)


@contextlib.contextmanager
def use_backend(name):
    # the adaptation loop always goes through the active backend, so the
    # end-to-end row swaps the selection for its duration
    saved = backends._active
    backends._active = backends.get_backend(name)
    try:
        yield
    finally:
        backends._active = saved


def bench_adapt(backend_name):
    with use_backend(backend_name):
        source, target = gen_rotated_gaussians(per_class=150, num_classes=3,
                                               spread=1.2, theta=35.0, seed=0)
        model = init_model([2, 16, 3], seed=0)
        pretrain_source(model, source, TrainConfig(epochs=10, seed=1))
        cp = ClassProportions(np.full(3, 1 / 3), "true")
        cfg = AdaptConfig(iterations=5, schedule_base=20.0,
                          schedule_step=20.0, seed=2)
        t0 = time.perf_counter()
        adapt(model, source, target, cp, cfg)
        return time.perf_counter() - t0


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="compare the available compute backends")
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repeats per kernel (median reported)")
    args = parser.parse_args(argv)

    names = available_backends()
    if len(names) < 2:
        print(f"only {names} available; build the extension to compare")

    rows = []
    for batch_size in (64, 512, 4096):
        rows.append((f"forward n={batch_size}",
                     {n: bench_forward(n, batch_size, args.repeats)
                      for n in names}))
        rows.append((f"train_step n={batch_size}",
                     {n: bench_train_step(n, batch_size, args.repeats)
                      for n in names}))
    rows.append(("adapt 5 rounds", {n: bench_adapt(n) for n in names}))

    width = max(len(label) for label, _ in rows)
    header = f"{'workload':<{width}}" + "".join(f"  {n:>12}" for n in names)
    if set(names) == {"python", "ext"}:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, times in rows:
        line = f"{label:<{width}}"
        for n in names:
            line += f"  {times[n] * 1e3:>10.3f}ms"
        if set(names) == {"python", "ext"}:
            line += f"  {times['python'] / times['ext']:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
