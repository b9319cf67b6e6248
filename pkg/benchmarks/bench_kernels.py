"""Time the compiled and numpy ringdown kernels on the same inputs.

    python benchmarks/bench_kernels.py [--shots 50] [--points 8001] [--tones 128]
"""
import argparse
import math
import timeit

import numpy as np

from dipper import _fallback, backend


def inputs(shots, points, tones, seed=0):
    rng = np.random.default_rng(seed)
    omegas = 2 * math.pi * np.geomspace(1.0, 2000.0, tones)
    coeffs = rng.normal(size=tones)
    phases = rng.uniform(0, 2 * math.pi, (shots, tones))
    a_in = np.zeros(points, complex)
    a_in[:5] = 1e3
    return omegas, coeffs, phases, a_in


def bench(kernels, args, dt, repeat):
    omegas, coeffs, phases, a_in = args
    n = a_in.size

    def phase():
        return kernels.jitter_phase(omegas, coeffs, phases, dt, n)

    theta = phase()
    k = 2 * math.pi * 100

    def field():
        return kernels.integrate_field(theta, a_in, dt, 0.0, k, math.sqrt(k / 2))

    return (min(timeit.repeat(phase, number=1, repeat=repeat)),
            min(timeit.repeat(field, number=1, repeat=repeat)), field())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=50)
    ap.add_argument("--points", type=int, default=8001)
    ap.add_argument("--tones", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    args = inputs(a.shots, a.points, a.tones)
    print(f"{a.shots} shots x {a.points} samples, {a.tones} jitter tones")
    results = {"python": bench(_fallback, args, 1e-6, a.repeat)}
    if backend.compiled is not None:
        results["cython"] = bench(backend.compiled, args, 1e-6, a.repeat)
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'backend':8s} {'jitter_phase':>14s} {'integrate_field':>16s}")
    for name, (tp, tf, _) in results.items():
        print(f"{name:8s} {tp * 1e3:12.1f} ms {tf * 1e3:14.1f} ms")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        print(f"speed-up  {py[0] / cy[0]:12.1f} x {py[1] / cy[1]:14.1f} x")
        diff = np.max(np.abs(py[2] - cy[2])) / np.max(np.abs(py[2]))
        print(f"max relative difference in a_out: {diff:.1e}")


if __name__ == "__main__":
    main()
