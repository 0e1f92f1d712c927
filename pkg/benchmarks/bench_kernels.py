"""Time the numba batch kernel against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--replications N] [--repeat K]
"""
import argparse
import time

import numpy as np

from opphunt._kernels import HAVE_NUMBA
from opphunt.engine import GameParams, SimConfig, simulate_raw
from opphunt.strategy import deterministic, exponential, mixture, reactive

PARAMS = GameParams(r=0.1, lam=1.0, cost=0.2, v_finder=1.0, v_other=0.3)
RARE = GameParams(r=0.1, lam=0.05, cost=0.2, v_finder=1.0, v_other=0.3)  # about 44 events per play

PAIRS = {
    "exp-vs-det": (exponential(1.3), deterministic(0.7), PARAMS),
    "mixture-vs-exp": (mixture([(0.4, deterministic(0.5)), (0.6, exponential(2.0))]), exponential(0.8), PARAMS),
    "reactive-vs-det": (reactive("by_last", {"start": {"kind": "exponential", "mu": 1.0},
                                             "after_other": {"kind": "deterministic", "tau": 0.3}}),
                        deterministic(0.9), PARAMS),
    "long-plays": (exponential(1.3), deterministic(0.7), RARE),
}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--replications", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cfg = SimConfig(replications=args.replications, master_seed=1)
    if not HAVE_NUMBA:
        print("numba not importable; only the numpy path is timed")
    print(f"{'pair':<18}{'numpy s':>10}{'numba s':>10}{'speedup':>9}  fields match")
    for name, (s1, s2, params) in PAIRS.items():
        t_np = best_time(lambda: simulate_raw(s1, s2, params, cfg, use_numba=False), args.repeat)
        if not HAVE_NUMBA:
            print(f"{name:<18}{t_np:>10.3f}")
            continue
        simulate_raw(s1, s2, params, SimConfig(replications=10), use_numba=True)  # compile
        t_nb = best_time(lambda: simulate_raw(s1, s2, params, cfg, use_numba=True), args.repeat)
        a = simulate_raw(s1, s2, params, cfg, use_numba=False)
        b = simulate_raw(s1, s2, params, cfg, use_numba=True)
        same = all(np.array_equal(a[k], b[k]) for k in ("outcome", "n_events", "draws", "first_actual"))
        close = np.allclose(a["pay1"], b["pay1"], rtol=1e-12, atol=1e-15)
        print(f"{name:<18}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x  {same and close}")


if __name__ == "__main__":
    main()
