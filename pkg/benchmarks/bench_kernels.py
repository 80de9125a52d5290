"""Compare the compiled lattice kernels against the pure numpy fallback.

Times the three stencil kernels on their own, then a short training run under
each backend (selected the same way users select it, via the PGGSIM_KERNELS
environment variable in a child process). Run from the repository root after
installing the package:

    python3 benchmarks/bench_kernels.py [--size 200] [--repeats 20]
"""

from __future__ import annotations

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from pggsim import _kernels_py, kernels


def median_time(fn, repeats):
    fn()  # warmup
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_stencils(L, repeats):
    rng = np.random.default_rng(0)
    grid = (rng.random((L, L)) < 0.5).astype(np.int64)
    dirs = rng.integers(0, 4, size=(L, L))
    values = rng.normal(size=(L, L))

    try:
        from pggsim import _kernels as compiled
    except ImportError:
        compiled = None

    cases = [
        ("plus_sum", lambda mod: mod.plus_sum(grid)),
        ("state_index", lambda mod: mod.state_index(grid)),
        ("pick_neighbor", lambda mod: mod.pick_neighbor(values, dirs)),
    ]
    print(f"stencil kernels on a {L}x{L} lattice (median of {repeats}):")
    for name, call in cases:
        t_py = median_time(lambda: call(_kernels_py), repeats)
        if compiled is None:
            print(f"  {name:>13}: numpy {t_py * 1e6:8.1f} us   (compiled extension not built)")
            continue
        t_c = median_time(lambda: call(compiled), repeats)
        assert np.array_equal(call(compiled), call(_kernels_py))
        print(f"  {name:>13}: numpy {t_py * 1e6:8.1f} us   compiled {t_c * 1e6:8.1f} us   x{t_py / t_c:5.2f}")


_EPOCH_WORKER = """
import statistics, time
from pggsim import kernels
from pggsim.config import config_from_dict
from pggsim.grpo import run_training
cfg = config_from_dict({{"algorithm": "grpo_gcc", "L": {L}, "r": 4.0, "epochs": 5,
                         "seed": 11, "snapshot_epochs": []}})
run_training(cfg)
samples = []
for _ in range({repeats}):
    t0 = time.perf_counter()
    run_training(cfg)
    samples.append(time.perf_counter() - t0)
print(kernels.IMPL, statistics.median(samples))
"""


def bench_epoch(L, repeats):
    if not kernels.HAVE_COMPILED:
        print("training comparison skipped: compiled extension not built")
        return
    print(f"five training epochs on a {L}x{L} lattice (median of {repeats}):")
    script = _EPOCH_WORKER.format(L=L, repeats=repeats)
    results = {}
    for impl in ("python", "compiled"):
        env = dict(os.environ, PGGSIM_KERNELS=impl)
        out = subprocess.run([sys.executable, "-c", script], env=env,
                             capture_output=True, text=True, check=True)
        name, value = out.stdout.split()
        assert name == impl, f"worker ran {name!r}, wanted {impl!r}"
        results[impl] = float(value)
        print(f"  {impl:>8}: {results[impl] * 1e3:8.1f} ms")
    print(f"  training speedup: x{results['python'] / results['compiled']:.2f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=200, help="lattice side length")
    parser.add_argument("--repeats", type=int, default=20, help="timed repetitions per case")
    args = parser.parse_args()
    print(f"active kernel backend: {kernels.IMPL}")
    bench_stencils(args.size, args.repeats)
    bench_epoch(args.size, max(3, args.repeats // 4))


if __name__ == "__main__":
    main()
