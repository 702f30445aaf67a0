"""Compare the compiled and pure-Python geometry kernels.

    python3 benchmarks/bench_kernels.py [--tokens 200 400 800] [--repeat 5]

Prints one row per kernel and population size, then times a full simulator
run under each backend (the backend is chosen at import, so each run is a
separate interpreter).
"""

import argparse
import os
import random
import subprocess
import sys
import timeit
from array import array

from tracer_token import _geometry_py

try:
    from tracer_token import _geometry as compiled
except ImportError:
    compiled = None

SIM_SNIPPET = (
    "import time;from tracer_token import fixtures, sim, geometry;"
    "sc=fixtures.crowd(1, n_tokens={n}, duration=3600);"
    "t=time.perf_counter();sim.run(sc);print(geometry.BACKEND, time.perf_counter()-t)"
)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(sizes, repeat):
    for n in sizes:
        rng = random.Random(n)
        xs = array("d", (rng.uniform(0, 50) for _ in range(n)))
        ys = array("d", (rng.uniform(0, 50) for _ in range(n)))
        ds = array("d", (rng.uniform(0, 3) for _ in range(n * 10)))
        cases = {
            "neighbor_pairs": lambda m: m.neighbor_pairs(xs, ys, 2.5),
            "rssi_hints": lambda m: m.rssi_hints(ds, -59.0, 2.0),
        }
        for name, call in cases.items():
            py = best(lambda: call(_geometry_py), repeat)
            cy = best(lambda: call(compiled), repeat) if compiled else float("nan")
            yield name, n, py, cy


def sim_time(n, pure):
    env = dict(os.environ)
    env.pop("TRACER_TOKEN_PURE", None)
    if pure:
        env["TRACER_TOKEN_PURE"] = "1"
    out = subprocess.run([sys.executable, "-c", SIM_SNIPPET.format(n=n)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", type=int, nargs="+", default=[100, 300, 1000])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sim-tokens", type=int, default=60)
    args = ap.parse_args()
    if compiled is None:
        print("compiled kernel not built; only the Python timings are meaningful")
    print(f"{'kernel':<16}{'n':>6}{'python ms':>12}{'cython ms':>12}{'speedup':>9}")
    for name, n, py, cy in kernel_rows(args.tokens, args.repeat):
        print(f"{name:<16}{n:>6}{py * 1e3:>12.3f}{cy * 1e3:>12.3f}{py / cy:>8.1f}x")
    print()
    for pure in (True, False):
        backend, secs = sim_time(args.sim_tokens, pure)
        print(f"simulator, {args.sim_tokens} tokens, 1 h, backend={backend}: {secs:.2f}s")


if __name__ == "__main__":
    main()
