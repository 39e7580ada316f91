"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py --agents 256 --steps 25 --repeat 5
"""
import argparse
import time

import numpy as np

from trajdiff.kernels import _pykernels

try:
    from trajdiff.kernels import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_inputs(agents, steps, seed):
    rng = np.random.default_rng(seed)
    speed = rng.uniform(2, 30, size=(agents, 1))
    yaw_rate = rng.uniform(-0.3, 0.3, size=(agents, 1))
    k = np.arange(1, steps + 1)[None, :]
    heading = yaw_rate * 0.2 * k
    step = np.stack([np.cos(heading), np.sin(heading)], -1) * speed[..., None] * 0.2
    refs = np.cumsum(step, axis=1) + rng.normal(0, 0.1, size=(agents, steps, 2))
    init = np.zeros((agents, 3))
    return refs, init


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=256)
    ap.add_argument("--steps", type=int, default=25)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    refs, init = make_inputs(args.agents, args.steps, args.seed)
    truth = refs + 0.5
    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    for name, mod in impls:
        results[name] = {
            "pursuit_rollout": best_of(lambda: mod.pursuit_rollout(refs, init, 0.2, 1.5, 0.5, 2.0), args.repeat),
            "displacement_errors": best_of(lambda: mod.displacement_errors(refs, truth), args.repeat),
        }
    if _ckernels:
        a, _ = _pykernels.pursuit_rollout(refs, init, 0.2, 1.5, 0.5, 2.0)
        b, _ = _ckernels.pursuit_rollout(refs, init, 0.2, 1.5, 0.5, 2.0)
        print(f"max |cython - python| pursuit_rollout: {np.abs(a - b).max():.3e}")
    print(f"{'kernel':<22}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for kernel in results["python"]:
        py = results["python"][kernel] * 1e3
        cy = results.get("cython", {}).get(kernel)
        if cy is None:
            print(f"{kernel:<22}{py:>14.3f}{'n/a':>14}{'':>10}")
        else:
            print(f"{kernel:<22}{py:>14.3f}{cy * 1e3:>14.3f}{py / (cy * 1e3):>9.1f}x")


if __name__ == "__main__":
    main()
