"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --n 50000 --m 8 --h 16
"""

import argparse
import time

import numpy as np

from compvq.kernels import DotTables, adc_scores, available_backends, beam_codes, greedy_codes


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=50_000, help="vectors for greedy encoding and ADC")
    p.add_argument("--beam-n", type=int, default=2_000, help="vectors for beam search")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--h", type=int, default=16)
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    books = (rng.standard_normal((args.m, args.h, args.d))
             / np.arange(1, args.m + 1)[:, None, None]).astype(np.float32)
    tables = DotTables(books)
    Y = rng.standard_normal((args.n, args.d))
    Yb = Y[:args.beam_n]
    lut = rng.standard_normal((args.m, args.h))
    codes = rng.integers(0, args.h, (args.n, args.m)).astype(np.uint8)
    norms = rng.random(args.n)

    cases = {
        f"greedy n={args.n}": lambda be: greedy_codes(Y, tables, nthreads=args.threads, backend=be),
        f"beam b={args.beam} n={args.beam_n}": lambda be: beam_codes(Yb, tables, args.beam, args.threads, be)[0],
        f"adc n={args.n}": lambda be: adc_scores(lut, codes, norms, backend=be),
    }
    backends = available_backends()
    print(f"backends: {', '.join(backends)}; m={args.m} h={args.h} d={args.d} threads={args.threads}")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        row, outs = [], []
        for be in backends:
            t, out = best_of(lambda: fn(be), args.repeats)
            row.append(t)
            outs.append(out)
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        speed = f"{row[-1] / row[0]:.1f}x" if len(row) > 1 else "-"
        print(f"{name:<24}" + "".join(f"{t * 1e3:>10.1f}ms" for t in row) + f"{speed:>10}"
              + ("" if same else "  OUTPUTS DIFFER"))


if __name__ == "__main__":
    main()
