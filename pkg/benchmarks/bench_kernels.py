"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best-of-``repeat`` wall time for a full random-policy episode
(the per-frame simulator) and for GAE / discounted returns over a 1024-step
buffer, plus the speed-up of the compiled backend.
"""
import argparse
import timeit

import numpy as np

from collabinf import kernels
from collabinf.channel import JointAction
from collabinf.simenv import CollabInferenceEnv, EnvConfig


def episode(backend: str, n: int = 5) -> None:
    env = CollabInferenceEnv(EnvConfig(ue_count=n, eval_mode=True), np.random.default_rng(0))
    rng = np.random.default_rng(1)
    state = env.reset()
    while not state.done:
        a = JointAction(rng.integers(0, env.n_partitions, n), rng.integers(0, env.n_channels, n),
                        rng.uniform(env.p_min, env.p_max, n))
        state, _ = env.step(state, a, backend=backend)


def estimators(backend: str, data) -> None:
    r, v, d = data
    kernels.gae(r, v, d, 0.95, 0.95, 0.0, backend=backend)
    kernels.discounted_returns(r, d, 0.95, 0.0, backend=backend)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the Python fallback can be timed")
    rng = np.random.default_rng(0)
    data = (rng.normal(size=1024), rng.normal(size=1024), rng.random(1024) < 0.02)
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    cases = {
        "episode (N=5, 200 tasks/UE)": (lambda b: episode(b), 1),
        "gae + returns (T=1024)": (lambda b: estimators(b, data), 200),
    }
    print(f"{'case':<30} {'backend':<8} {'seconds/call':>14}")
    for name, (fn, number) in cases.items():
        times = {}
        for b in backends:
            best = min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number
            times[b] = best
            print(f"{name:<30} {b:<8} {best:>14.6f}")
        if len(times) == 2:
            print(f"{'':<30} {'speedup':<8} {times['python'] / times['cython']:>13.1f}x")


if __name__ == "__main__":
    main()
