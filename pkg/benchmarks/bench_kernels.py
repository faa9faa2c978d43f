"""Time the numba and numpy kernel backends on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Shapes follow the desk-scale experiment: utterances of 5-15 symbols at 2-6
frames per symbol over 20 symbols plus blank.
"""

import argparse
import json
import statistics
import time

import numpy as np

from phonmap import kernels, nn
from phonmap.ctc import expand_with_blanks


def ctc_case(rng, T, L, V=21):
    # nonzero steps mod V-1: no adjacent repeats, so T >= L is feasible
    labels = np.cumsum(rng.integers(1, V - 1, size=L)) % (V - 1)
    lp = nn.log_softmax_rows(rng.normal(size=(T, V)))
    return lp, expand_with_blanks(labels, V - 1).astype(np.int64)


def timeit(fn, repeat):
    fn()  # warm-up (and numba compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", metavar="PATH")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    cases = {
        "ctc T=40 L=10": ctc_case(rng, 40, 10),
        "ctc T=120 L=30": ctc_case(rng, 120, 30),
        "ctc T=600 L=150": ctc_case(rng, 600, 150),
    }
    seqs = [(rng.integers(0, 20, size=15), rng.integers(0, 20, size=14)) for _ in range(200)]

    backends = ["numpy"] + (["numba"] if kernels.NUMBA_AVAILABLE else [])
    rows = []
    for name, (lp, ext) in cases.items():
        t = {b: timeit(lambda m=kernels.backend_module(b): m.ctc_forward_backward(lp, ext), args.repeat)
             for b in backends}
        rows.append((name, t))
    t = {b: timeit(lambda m=kernels.backend_module(b): [m.edit_distance(a, h) for a, h in seqs], args.repeat)
         for b in backends}
    rows.append(("edit_distance x200 (len 15)", t))

    print(f"{'kernel':32s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, t in rows:
        line = f"{name:32s}" + "".join(f"{t[b] * 1e3:11.3f} ms" for b in backends)
        if len(backends) == 2:
            line += f"{t['numpy'] / t['numba']:11.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as f:
            json.dump({name: t for name, t in rows}, f, indent=1)


if __name__ == "__main__":
    main()
