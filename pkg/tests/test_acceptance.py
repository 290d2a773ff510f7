"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py``; the report lines are
printed in the terminal summary (and immediately when run with ``-s``).
"""

import itertools
import random
import struct
import time
from collections import Counter
from dataclasses import replace
from fractions import Fraction

import pytest

from specedge.analytics import (LatencyParams, cost_cloud_ar, cost_cloud_sd,
                                cost_edge_sd, expected_tau_greedy, heatmap_grid, latency_ar,
                                latency_fsd, latency_sd, load_pricing, metrics_finalize,
                                speedup_projection)
from specedge.cli import main as cli_main
from specedge.client import ClientConfig, ClientCore
from specedge.experiment import load_config, parse_config, run_experiment, run_seed
from specedge.models import SyntheticModel, SyntheticParams, VocabConfig, sample_index
from specedge.protocol import ArRequest, End, Error, ExitOutput, Hello, decode_frame, encode_frame
from specedge.server import ServerCore
from specedge.specdec import (DraftBatch, acceptance_probability, residual_distribution,
                              verify_stochastic)

REF = "configs/reference.cfg"
ABLATION = "configs/ablation.cfg"


@pytest.fixture
def report(acceptance_log):
    def emit(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        print(line)
        acceptance_log.append(line)
        assert ok, line
    return emit


# 1 ------------------------------------------------------------------------
def test_criterion_01_cost_table(report):
    rows = load_pricing(open("configs/pricing.csv").read(), gamma=4, tau=2.5)
    expected = [(540, 360, 270), (540, 312, 270), (454, 286, 217), (420, 390, 210)]
    got = [(cost_cloud_ar(r), cost_cloud_sd(r), cost_edge_sd(r)) for r in rows]
    worst = max(abs(g - e) for gs, es in zip(got, expected) for g, e in zip(gs, es))
    ok = len(got) == 4 and worst <= 1.0
    report(1, ok, f"12 provider cost values, max deviation ${worst:.2f} (tolerance $1)")


# 2 ------------------------------------------------------------------------
def test_criterion_02_latency_formulas(report):
    p = LatencyParams(T_c=95, T_q=497, T_p=83.5, gamma=4, n=200, tau=2.15)
    ar, sd = latency_ar(p), latency_sd(p)
    oracle_sd = 200 / 2.15 * (2 * 95 + 334 + 497)
    ok = ar == 99_590 and abs(sd - oracle_sd) < 1e-6 and round(sd) == 94_977
    report(2, ok, f"AR {ar:.0f} ms (want 99590), SD {sd:.3f} ms (want ~94977)")


# 3 ------------------------------------------------------------------------
def test_criterion_03_speedup_projection(report):
    t0 = time.perf_counter()
    rng = random.Random(3)
    bad = 0
    for _ in range(1000):
        g, c = rng.randint(1, 32), rng.uniform(0, 10)
        bad += abs(speedup_projection(g, c, 0.0) - (g * c + 1)) > 1e-9 * (g * c + 1)
        bad += abs(speedup_projection(g, c, 1.0) - 1.0) > 1e-12
    _, _, grid = heatmap_grid(4, (0.0, 1.0), (0.0, 1.0), 100)
    mono = all(grid[i][j + 1] <= grid[i][j] for i in range(100) for j in range(99)) and all(
        grid[i + 1][j] >= grid[i][j] for i in range(99) for j in range(100))
    dt = time.perf_counter() - t0
    ok = bad == 0 and mono and dt < 1.0
    report(3, ok, f"1000 random (gamma, c) limits, {bad} errors; 100x100 grid monotone={mono}; "
                  f"{dt:.2f} s")


# 4 ------------------------------------------------------------------------
def exactness_configs():
    combos = list(itertools.product((2, 4, 8), (0, 3, 15), (1, 4, 8), (0.3, 0.8, 1.0)))
    for k in range(100):
        gamma, threads, L, alpha = combos[k % len(combos)]
        yield dict(gamma=gamma, threads=threads, exits=L, alpha=alpha, n=200, seeds=(1000 + k,))


def test_criterion_04_exactness(report):
    t0 = time.perf_counter()
    failures = []
    for kw in exactness_configs():
        cfg = parse_config("", **kw)
        seed = cfg.seeds[0]
        ar, sd, fsd = (run_seed(cfg, seed, mode, trace=False).tokens for mode in ("ar", "sd", "fsd"))
        if not (ar == sd[:200] == fsd[:200] and sd == fsd):
            failures.append(kw)
    dt = time.perf_counter() - t0
    ok = not failures and dt < 120
    report(4, ok, f"100 configs x n=200, AR = SD = FSD token-for-token, {len(failures)} mismatches, "
                  f"{dt:.1f} s")


# 5 ------------------------------------------------------------------------
def grid_distributions():
    tenths = range(1, 9)
    return [(Fraction(a, 10), Fraction(b, 10), Fraction(10 - a - b, 10))
            for a in tenths for b in tenths if 1 <= 10 - a - b <= 8]


def exact_output_law(p, q):
    """Law of the emitted token for gamma = 1, enumerated exactly."""
    law = [Fraction(0)] * len(q)
    reject = Fraction(0)
    for x, px in enumerate(p):
        a = Fraction(acceptance_probability(q[x], px))
        law[x] += px * a
        reject += px * (1 - a)
    if reject:
        for y, ry in enumerate(residual_distribution(q, p)):
            law[y] += reject * ry
    return law


def test_criterion_05_stochastic_verification(report):
    t0 = time.perf_counter()
    dists = grid_distributions()
    pairs = 0
    worst = Fraction(0)
    for p in dists:
        for q in dists:
            law = exact_output_law(p, q)
            worst = max(worst, sum(abs(a - b) for a, b in zip(law, q)) / 2)
            pairs += 1
    p, q = (0.1, 0.1, 0.8), (0.6, 0.3, 0.1)
    rng = random.Random(20240501)
    batches = [DraftBatch(1, 1, (x,), (p,), True) for x in range(3)]
    counts = Counter()
    trials = 10**6
    for _ in range(trials):
        x = sample_index(p, rng.random())
        counts[verify_stochastic(lambda k: q, batches[x], rng).output[0]] += 1
    tv = sum(abs(counts[i] / trials - q[i]) for i in range(3)) / 2
    dt = time.perf_counter() - t0
    ok = pairs == 1296 and worst == 0 and tv < 0.005 and dt < 60
    report(5, ok, f"{pairs} exact V=3 pairs, max TV {float(worst)}; Monte-Carlo 10^6 TV {tv:.5f}; "
                  f"{dt:.1f} s")


# 6 ------------------------------------------------------------------------
def test_criterion_06_tau(report):
    params = SyntheticParams(6, VocabConfig(32000), 1, 0.8, ())
    model = SyntheticModel(params)
    client = ClientCore(ClientConfig(gamma=4, n=10**9, worker_threads=0, predraft=False), model, (1,))
    server = ServerCore(model, (1,), stream_exits=False)
    batch = client.first_batch()
    for _ in range(10_000):
        (final,) = server.handle(batch)
        client.ingest(final)
        batch = client.on_final().batch
    tau, _, _ = metrics_finalize(client.metrics)
    ok = client.metrics.rounds == 10_000 and 3.31 <= tau <= 3.41
    report(6, ok, f"tau {tau:.4f} over {client.metrics.rounds} rounds "
                  f"(window [3.31, 3.41], analytic {expected_tau_greedy(0.8, 4):.4f})")


# 7 ------------------------------------------------------------------------
def test_criterion_07_simulator_vs_closed_form(report):
    base = dict(exits=4, alpha=1.0, beta=(1.0, 1.0, 1.0), gamma=4, n=2000, threads=3,
                T_c=95, T_q=497, T_p=83.5, T_r=5)
    lines, ok = [], True
    for pattern, r_nominal in (("", 0.0), ("01", 0.5), ("0", 1.0)):
        cfg = parse_config("", hit_pattern=pattern, **base)
        res = run_seed(cfg, 42, trace=False)
        tau, r, _ = metrics_finalize(res.metrics)
        kw = dict(T_p=cfg.T_p, T_q=cfg.T_q, T_c=cfg.T_c, T_r=cfg.T_r, gamma=cfg.gamma,
                  n=res.metrics.tokens_emitted, tau=tau)
        measured = latency_fsd(LatencyParams(**kw, miss_rate=r))
        nominal = latency_fsd(LatencyParams(**kw, miss_rate=r_nominal))
        e1 = abs(res.wall_ms - measured) / measured
        e2 = abs(res.wall_ms - nominal) / nominal
        ok &= e1 <= 0.01 and e2 <= 0.01
        lines.append(f"r={r_nominal}: sim {res.wall_ms:.0f} ms, formula {nominal:.0f} ms "
                     f"({100 * e2:.2f}%), at measured r={r:.4f} ({100 * e1:.4f}%)")
    report(7, ok, "; ".join(lines))


# 8 ------------------------------------------------------------------------
def test_criterion_08_queue_ablation(report):
    cfg = load_config(ABLATION)
    assert len(cfg.seeds) == 100 and cfg.threads == 3
    miss = {}
    for cq in ("priority", "fifo", "random"):
        for sq in ("priority", "fifo"):
            res = run_experiment(replace(cfg, client_q=cq, server_q=sq), trace=False)
            miss[cq, sq] = sum(r["miss_rate"] for r in res.rows) / len(res.rows)
    client_ok = all(miss["priority", sq] <= miss["fifo", sq] for sq in ("priority", "fifo"))
    server_ok = all(miss[cq, "priority"] <= miss[cq, "fifo"] for cq in ("priority", "fifo", "random"))
    detail = ", ".join(f"{c}/{s} {v:.4f}" for (c, s), v in miss.items())
    report(8, client_ok and server_ok, f"mean miss rate over 100 seeds: {detail}")


# 9 ------------------------------------------------------------------------
def f32(x):
    return struct.unpack(">f", struct.pack(">f", x))[0]


def random_message(rng):
    kind = rng.randrange(6)
    u32 = lambda: rng.getrandbits(32)  # noqa: E731
    if kind == 0:
        d = rng.randrange(9)
        return ExitOutput(u32(), rng.getrandbits(16), d, tuple(u32() for _ in range(d + 1)),
                          f32(rng.random()), rng.random() < 0.5)
    if kind == 1:
        g = rng.randrange(9)
        toks = tuple(u32() for _ in range(g))
        if rng.random() < 0.5:
            v = rng.randrange(1, 6)
            return DraftBatch(u32(), u32(), toks,
                              tuple(tuple(f32(rng.random()) for _ in range(v)) for _ in range(g)), True)
        return DraftBatch(u32(), u32(), toks, tuple(f32(rng.random()) for _ in range(g)), False)
    if kind == 2:
        return Hello(rng.getrandbits(16), u32(), rng.getrandbits(16), rng.getrandbits(16),
                     tuple(u32() for _ in range(rng.randrange(5))))
    if kind == 3:
        return End(u32())
    if kind == 4:
        return Error(u32(), "".join(chr(rng.randrange(32, 0x2FF)) for _ in range(rng.randrange(12))))
    return ArRequest(u32(), u32())


def test_criterion_09_codec_and_transport(report):
    rng = random.Random(9)
    bad = 0
    for _ in range(10**5):
        msg = random_message(rng)
        bad += decode_frame(encode_frame(msg)) != msg
    sim = run_seed(load_config(REF), 42, trace=False)
    tcp = run_seed(load_config(REF, transport="tcp"), 42)
    same = tcp.tokens == sim.tokens
    report(9, bad == 0 and same, f"10^5 random frames, {bad} round-trip failures; loopback TCP FSD "
                                 f"stream identical to sim: {same} ({len(tcp.tokens)} tokens)")


# 10 -----------------------------------------------------------------------
def test_criterion_10_determinism(report, tmp_path):
    variants = {"reference": "", "stochastic": "verify = stochastic\npayload = full\n",
                "random-queue": "client_q = random\nthreads = 2\n"}
    ref = open(REF).read()
    results = {}
    for name, extra in variants.items():
        cfg = tmp_path / f"{name}.cfg"
        cfg.write_text(ref + extra + "seeds = 42, 7\nn = 120\n")
        blobs = []
        for rep in range(2):
            out = tmp_path / f"{name}{rep}"
            code = cli_main(["run", "--config", str(cfg), "--out", f"{out}.csv",
                             "--trace-out", f"{out}-{{seed}}.trace"])
            assert code == 0
            blobs.append(tuple(open(p, "rb").read() for p in
                               (f"{out}.csv", f"{out}-42.trace", f"{out}-7.trace")))
        results[name] = blobs[0] == blobs[1]
    report(10, all(results.values()),
           "summary CSV and event traces byte-identical across reruns: "
           + ", ".join(f"{k}={v}" for k, v in results.items()))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
