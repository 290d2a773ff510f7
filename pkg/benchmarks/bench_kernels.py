"""Compiled vs pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the PRF primitives, the greedy draft/scan loops and one full FSD
simulation on each backend, and checks that both produce the same results.
"""

import argparse
import timeit

from specedge import kernels
from specedge.experiment import parse_config
from specedge.models import FINAL, tag
from specedge.simulation import sim_run

KEY = 0x243F6A8885A308D3
TOKENS = tuple(range(64))


def cases(k):
    return {
        "mix x10k": lambda: [k.mix(i) for i in range(10_000)],
        "fold 64 tok x1k": lambda: [k.fold(i, TOKENS) for i in range(1_000)],
        "greedy_draft g=8 x2k": lambda: [k.greedy_draft(KEY, i, 32000, 4, 5, 1, 0.8, 8)
                                         for i in range(2_000)],
        "greedy_scan g=8 x2k": lambda: [k.greedy_scan(KEY, i, 32000, 2, 3, 1, 0.9, TOKENS[:8])
                                        for i in range(2_000)],
        "greedy_rollout n=500": lambda: k.greedy_rollout(KEY, 7, 32000, tag(FINAL, 0), 500),
    }


def sim_case(name):
    cfg = parse_config("exits = 8\nn = 400\n")
    sc = cfg.scenario(42, trace=False)
    sc.backend = name

    def run():
        return sim_run(sc).tokens
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        c = kernels.load("c")
    except ImportError:
        print("compiled backend not built; only the fallback is available")
        return 1
    py = kernels.load("py")
    print(f"auto-selected backend: {kernels.BACKEND}")
    print(f"{'case':24s} {'c ms':>10s} {'py ms':>10s} {'speedup':>8s}")
    rows = [(name, fc, cases(py)[name]) for name, fc in cases(c).items()]
    rows.append(("fsd sim n=400 L=8", sim_case("c"), sim_case("py")))
    for name, fc, fp in rows:
        if fc() != fp():
            raise SystemExit(f"backends disagree on {name}")
        tc = min(timeit.repeat(fc, number=1, repeat=args.repeat)) * 1e3
        tp = min(timeit.repeat(fp, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:24s} {tc:10.3f} {tp:10.3f} {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
