"""``specedge`` command line: experiments, servers and calculators."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analytics
from .analytics import ROUND_FIELDS, write_csv
from .errors import ConfigError, ExactnessError, ProtocolError, SessionError
from .experiment import (COMPARE_FIELDS, compare_modes, load_config, make_model, mean_row,
                         run_experiment, summary_row)


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _per_seed(path: str, seed: int, many: bool) -> str:
    if "{seed}" in path:
        return path.format(seed=seed)
    if not many:
        return path
    p = Path(path)
    return str(p.with_name(f"{p.stem}-seed{seed}{p.suffix}"))


def cmd_run(args) -> int:
    cfg = load_config(args.config, transport=args.transport)
    result = run_experiment(cfg, trace=bool(args.trace_out))
    _write(args.out, result.summary_csv())
    many = len(result.runs) > 1
    for seed, res in result.runs.items():
        if args.rounds_out:
            _write(_per_seed(args.rounds_out, seed, many),
                   write_csv((r.as_row() for r in res.rounds), ROUND_FIELDS))
        if args.trace_out:
            _write(_per_seed(args.trace_out, seed, many), res.trace_text())
        if args.tokens_out:
            _write(_per_seed(args.tokens_out, seed, many), " ".join(map(str, res.tokens)) + "\n")
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config, transport=args.transport)
    rows = compare_modes(cfg)
    if len(rows) > 1:
        rows.append(mean_row(rows))
    _write(args.out, write_csv(rows, COMPARE_FIELDS))
    return 0


ABLATION_FIELDS = ["client_q", "server_q", "seeds", "mean_miss_rate", "mean_tau", "mean_wall_ms"]


def cmd_ablation(args) -> int:
    cfg = load_config(args.config)
    rows = []
    for cq in args.client_q.split(","):
        for sq in args.server_q.split(","):
            sub = replace(cfg, client_q=cq, server_q=sq, mode="fsd").validate()
            res = run_experiment(sub, trace=False)
            k = len(res.rows)
            rows.append({"client_q": cq, "server_q": sq, "seeds": k,
                         "mean_miss_rate": sum(r["miss_rate"] for r in res.rows) / k,
                         "mean_tau": sum(r["tau"] for r in res.rows) / k,
                         "mean_wall_ms": sum(r["wall_ms"] for r in res.rows) / k})
    _write(args.out, write_csv(rows, ABLATION_FIELDS))
    return 0


def cmd_serve(args) -> int:
    from .tcp import Injected, SessionServer

    cfg = load_config(args.config)
    seed = cfg.seeds[0]
    inject = Injected(cfg.T_p, cfg.T_q, cfg.T_r) if cfg.inject_latency else Injected()
    server = SessionServer(make_model(cfg, seed), args.host, args.port, cfg.verify, cfg.server_q,
                           stream_exits=cfg.mode == "fsd", inject=inject)
    print(f"listening on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        for _ in range(args.sessions) if args.sessions else iter(int, 1):
            server.serve_one()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def cmd_client(args) -> int:
    from .simulation import SimResult
    from .tcp import FramedSocket, Injected, ar_generate, client_generate

    cfg = load_config(args.config)
    seed = cfg.seeds[0]
    inject = Injected(cfg.T_p, cfg.T_q, cfg.T_r) if cfg.inject_latency else Injected()
    model = make_model(cfg, seed)
    session = FramedSocket.connect(args.host, args.port)
    try:
        ccfg = replace(cfg.client_config(seed), predraft=cfg.mode == "fsd")
        run = (ar_generate if cfg.mode == "ar" else client_generate)(
            ccfg, model, session, cfg.prompt, inject)
    finally:
        session.close()
        if hasattr(model, "close"):
            model.close()
    res = SimResult(run.tokens, run.metrics, run.rounds, run.wall_ms)
    _write(args.out, write_csv([summary_row(cfg, seed, cfg.mode, res)], analytics.SUMMARY_FIELDS))
    if args.tokens_out:
        _write(args.tokens_out, " ".join(map(str, run.tokens)) + "\n")
    return 0


def cmd_cost(args) -> int:
    text = Path(args.pricing_file).read_text(encoding="utf-8")
    rows = analytics.load_pricing(text, gamma=args.gamma, tau=args.tau, requests=args.requests,
                                  in_tokens=args.in_tokens, out_tokens=args.out_tokens)
    out = [{"provider": r.provider,
            "cloud_ar": round(analytics.cost_cloud_ar(r), 2),
            "cloud_sd": round(analytics.cost_cloud_sd(r), 2),
            "edge_sd": round(analytics.cost_edge_sd(r), 2)} for r in rows]
    _write(args.out, write_csv(out, ["provider", "cloud_ar", "cloud_sd", "edge_sd"]))
    return 0


def cmd_project(args) -> int:
    print(analytics.speedup_projection(args.gamma, args.c, args.r))
    return 0


def cmd_heatmap(args) -> int:
    cs, rs, grid = analytics.heatmap_grid(args.gamma, (args.c_min, args.c_max),
                                          (args.r_min, args.r_max), args.steps)
    _write(args.out, analytics.heatmap_csv(args.gamma, cs, rs, grid))
    return 0


def cmd_adapter(args) -> int:
    from .adapter import serve_adapter
    from .models import SyntheticModel

    cfg = load_config(args.config)
    serve_adapter(SyntheticModel(cfg.params(cfg.seeds[0])), sys.stdin, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specedge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run one mode over every configured seed")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="-", help="summary CSV (default stdout)")
    s.add_argument("--rounds-out", help="per-round CSV ({seed} placeholder allowed)")
    s.add_argument("--trace-out", help="event trace (sim transport only)")
    s.add_argument("--tokens-out", help="generated token ids")
    s.add_argument("--transport", choices=["sim", "tcp"], help="override the config")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("compare", help="AR vs SD vs FSD with exactness check")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--transport", choices=["sim", "tcp"])
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("ablation", help="mean miss rate per client/server queue strategy")
    s.add_argument("--config", required=True)
    s.add_argument("--client-q", default="priority,fifo,random")
    s.add_argument("--server-q", default="priority,fifo")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_ablation)

    s = sub.add_parser("serve", help="serve verification sessions over TCP")
    s.add_argument("--config", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, required=True)
    s.add_argument("--sessions", type=int, default=0, help="stop after N sessions (0 = forever)")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("client", help="run the edge client against a server")
    s.add_argument("--config", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--tokens-out")
    s.set_defaults(func=cmd_client)

    s = sub.add_parser("cost", help="API cost of cloud AR / cloud SD / edge-cloud SD")
    s.add_argument("--pricing-file", required=True)
    s.add_argument("--gamma", type=int, default=4)
    s.add_argument("--tau", type=float, default=2.5)
    s.add_argument("--requests", type=int, default=1_000_000)
    s.add_argument("--in-tokens", type=int, default=100)
    s.add_argument("--out-tokens", type=int, default=500)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("project", help="projected SD -> FSD speedup")
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--r", type=float, required=True)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("heatmap", help="speedup projection grid as CSV")
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--c-min", type=float, default=0.0)
    s.add_argument("--c-max", type=float, default=1.0)
    s.add_argument("--r-min", type=float, default=0.0)
    s.add_argument("--r-max", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=11)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("adapter", help="serve the synthetic model as a JSON-lines adapter")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_adapter)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExactnessError as exc:
        print(f"exactness violation: {exc}", file=sys.stderr)
        return 3
    except (ProtocolError, SessionError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
