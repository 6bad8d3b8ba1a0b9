"""Compare the compiled and numpy propagation kernels.

    python3 benchmarks/bench_kernels.py --members 100 --realizations 300

Both backends run the same (network, shock) draws; the script checks they
agree before reporting timings.
"""
import argparse
import time

import numpy as np

from ccpstress.contagion import KERNELS, ContagionParams, propagate
from ccpstress.netrecon import NetworkSampler, calibrate_z
from ccpstress.rng import NETWORK, SHOCK, substream
from ccpstress.shocks import ShockConfig, make_shock
from ccpstress.synthetic import SyntheticMarketSpec, generate_synthetic_market


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--members", type=int, default=100)
    ap.add_argument("--realizations", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    snap = generate_synthetic_market(SyntheticMarketSpec(n_members=args.members)).snapshot
    sampler = NetworkSampler(snap, calibrate_z(snap))
    params = ContagionParams()
    inputs = [(sampler.sample(substream(0, r, NETWORK)),
               make_shock(snap, ShockConfig(), substream(0, r, SHOCK)))
              for r in range(args.realizations)]

    results, timings = {}, {}
    for name in sorted(KERNELS):
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            out = [propagate(net, snap, sv, params, backend=name) for net, sv in inputs]
            best = min(best, time.perf_counter() - t0)
        results[name], timings[name] = out, best
        print(f"{name:>7}: {best:.3f} s for {args.realizations} realizations "
              f"({1e3 * best / args.realizations:.3f} ms each, N = {args.members})")

    if len(results) < 2:
        print("compiled kernel not built; only the python backend was timed")
        return
    diff = max(float(np.max(np.abs(a.h - b.h))) for a, b in zip(results["python"], results["cython"]))
    print(f"max |h_python - h_cython| = {diff:.1e}")
    print(f"speed-up: {timings['python'] / timings['cython']:.2f}x")


if __name__ == "__main__":
    main()
