#!/usr/bin/env python3
"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Runs each hot kernel in-process (current mode) and reports timings; invoke
once normally and once with KAM3BP_DISABLE_NUMBA=1 to compare, or use
--both to let the script spawn the disabled-mode run itself.

    python3 bench/benchmark.py --both
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench(fn, *args, repeat=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_cases():
    from kam3bp import _accel, _kernels
    from kam3bp.averaging import QuadratureConfig, average_fast_angles
    from kam3bp.bodies import MassParams
    from kam3bp.charts import RpsCoords

    results = {"numba": bool(_accel.USE_NUMBA)}
    rng = np.random.default_rng(0)

    n = 1_000_000
    ell = rng.uniform(-10, 10, n)
    ecc = rng.uniform(0, 0.9, n)
    results["kepler_solve_1e6"] = bench(_kernels.kepler_u, ell, ecc)

    masses = MassParams(m0=1.0, m1=1.0, m2=0.1, mu=1e-3)
    L1 = masses.lambda_of(1, 0.09)
    L2 = masses.lambda_of(2, 1.0)
    pt = RpsCoords(Lambda1=L1, Lambda2=L2, lambda1=0, lambda2=0, eta1=0.03,
                   xi1=0.0, eta2=-0.02, xi2=0.01, p=0.02, q=0.0,
                   Z=0.4 * (L1 - L2), zeta=0.1)
    cfg = QuadratureConfig(N=128)
    results["averaging_grid_128x128"] = bench(average_fast_angles, pt, masses, cfg)

    state = np.array([0.0, masses.reduced(1) * 3.3541, 0.0, 0.0, 0.0, 0.02,
                      0.2, 0.0, 0.0, 1.0, 0.0, 0.0])
    mt = (masses.reduced(1), masses.total(1), masses.reduced(2), masses.total(2))

    def run_nbody():
        _kernels.nbody_run(state, 0.005, 100_000, 1000, _kernels.YOSHIDA6, *mt,
                           masses.m0, masses.m1, masses.m2, masses.mu, 1e-6)

    results["nbody_1e5_steps"] = bench(run_nbody, repeat=3)
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--both", action="store_true",
                    help="also run the numpy fallback in a subprocess and compare")
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    mine = run_cases()
    if not args.both:
        print(json.dumps(mine, indent=1) if args.json else _table(mine))
        return

    env = dict(os.environ, KAM3BP_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, __file__, "--json"], env=env,
                         capture_output=True, text=True, check=True)
    other = json.loads(out.stdout)
    fast, slow = (mine, other) if mine["numba"] else (other, mine)
    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>9}")
    for key in fast:
        if key == "numba":
            continue
        sp = slow[key] / fast[key]
        print(f"{key:<28}{fast[key]:>12.4f}{slow[key]:>12.4f}{sp:>8.1f}x")


def _table(res):
    lines = [f"numba enabled: {res['numba']}"]
    for k, v in res.items():
        if k != "numba":
            lines.append(f"{k:<28}{v:>12.4f} s")
    return "\n".join(lines)


if __name__ == "__main__":
    main()
