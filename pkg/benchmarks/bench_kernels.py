"""Benchmark: compiled kernel core versus the pure-numpy fallback.

Runs the two hot kernels (curve evaluation, SNR field sampling) on
representative planner workloads and prints a timing table.

    python benchmarks/bench_kernels.py [--repeats 7]
"""

import argparse
import importlib
import time

import numpy as np


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


CHANNEL_ARGS = dict(
    fc_hz=3.3e9,
    c_mps=299792458.0,
    a_logistic=12.08,
    b_logistic=0.11,
    eta_los=10**0.3,
    eta_nlos=10**2.5,
    tx_power_w=0.09,
    rx_gain=1.0,
    noise_w=7.21e-16,
)


def workloads(rng):
    ctrl_small = rng.normal(scale=1000.0, size=(7, 2))     # degree-6 shape curve
    xi_validate = rng.uniform(0, 1, 1000)                  # per-segment validation grid
    ctrl_batchxi = rng.uniform(0, 1, 100_000)              # dense resampling
    r_scan = np.arange(0.0, 8192.0, 1.0)                   # coverage-radius scan
    r_wide = rng.uniform(0.0, 8000.0, 200_000)             # stacked validation SNR queries
    return [
        ("decasteljau 7x2, 1k xi", lambda k: k.decasteljau_many(ctrl_small, xi_validate)),
        ("decasteljau 7x2, 100k xi", lambda k: k.decasteljau_many(ctrl_small, ctrl_batchxi)),
        ("snr_profile 8k radii", lambda k: k.snr_profile(r_scan, 200.0, **CHANNEL_ARGS)),
        ("snr_profile 200k radii", lambda k: k.snr_profile(r_wide, 200.0, **CHANNEL_ARGS)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    backends = {}
    backends["numpy"] = importlib.import_module("gcsflight._kernels_py")
    try:
        backends["cython"] = importlib.import_module("gcsflight._kernels")
    except ImportError:
        print("compiled extension not built; benchmarking the fallback only")

    rng = np.random.default_rng(0)
    loads = workloads(rng)

    # agreement check before timing
    if len(backends) == 2:
        for name, fn in loads:
            a = fn(backends["numpy"])
            b = fn(backends["cython"])
            assert np.allclose(a, b, rtol=1e-12), f"backend mismatch on {name}"

    width = max(len(name) for name, _ in loads)
    header = f"{'workload':<{width}}  " + "  ".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fn in loads:
        times = {b: best_of(lambda m=mod: fn(m), args.repeats) for b, mod in backends.items()}
        row = f"{name:<{width}}  " + "  ".join(f"{times[b] * 1e3:>10.3f}ms" for b in backends)
        if len(backends) == 2:
            row += f"  {times['numpy'] / times['cython']:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
