"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``; prints one line per kernel
with the best-of-N wall time of each backend and the speed-up.
"""

import argparse
import timeit

import numpy as np

from xbarsim import kernels
from xbarsim.device import DeviceParams, sine_waveform


def cases():
    p = DeviceParams.preset()
    wave = np.array(sine_waveform(2 * p.v_off, 1e6, samples_per_period=2000))
    t, v = np.ascontiguousarray(wave[:, 0]), np.ascontiguousarray(wave[:, 1])
    vteam_args = (t, v, p.w_min, p.r_on, p.r_off, p.v_on, p.v_off, p.k_on, p.k_off,
                  p.alpha_on, p.alpha_off, p.w_min, p.w_max, p.dt)
    rng = np.random.default_rng(0)
    images = rng.uniform(size=(450, 8, 8, 8))
    currents = rng.normal(size=200_000)
    return {
        "vteam_integrate (1 MHz sine, 2000 samples, 1e4 Euler steps)":
            ("vteam_integrate", vteam_args),
        "im2col (450x8x8x8, 3x3, pad 1)": ("im2col", (images, 3, 1, 1)),
        "adc_quantize (2e5 currents, 8 bits)": ("adc_quantize", (currents, 3.0, 8)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    compiled = kernels.compiled()
    if compiled is None:
        print("compiled extension not built; only the fallback can be timed")
    print(f"{'kernel':<62} {'fallback':>10} {'compiled':>10} {'speed-up':>9}")
    for label, (name, fn_args) in cases().items():
        slow = min(timeit.repeat(lambda: getattr(kernels.fallback, name)(*fn_args),
                                 number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{label:<62} {slow * 1e3:>8.2f}ms {'-':>10} {'-':>9}")
            continue
        fast = min(timeit.repeat(lambda: getattr(compiled, name)(*fn_args),
                                 number=1, repeat=args.repeat))
        print(f"{label:<62} {slow * 1e3:>8.2f}ms {fast * 1e3:>8.2f}ms {slow / fast:>8.1f}x")


if __name__ == "__main__":
    main()
