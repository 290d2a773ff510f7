"""Experiment configuration and runners behind the CLI.

Config files are flat ``key = value`` text; ``#`` starts a comment. Keys:

====================  ==========================================================
mode                  ``ar`` | ``sd`` | ``fsd``
transport             ``sim`` | ``tcp``
host, port            server address for ``tcp`` (port 0 = ephemeral, loopback)
seeds                 ``42``, ``1,2,3`` or ``1..100``
vocab, exits          vocabulary size, number of exits L
alpha                 draft agreement rate
beta                  comma list of L-1 exit agreement rates, or
beta_min, beta_max    evenly spaced rates (default 0.2 .. 0.95)
sharpness             peak logit of the synthetic distributions
gamma, n, threads     draft length, tokens to generate, pre-draft workers
client_q, server_q    queue strategies
verify                ``greedy`` | ``stochastic``
payload               ``compact`` | ``full``
T_c, T_p, T_q, T_r    latencies in ms (T_p per draft token)
prompt                comma list of prompt token ids
hit_pattern           e.g. ``01``: cycled per lookup, ``0`` forces a miss
inject_latency        ``1`` makes tcp runs sleep for T_p/T_q/T_r
adapter               shell command of a JSON-lines model adapter
====================  ==========================================================
"""

from __future__ import annotations

import shlex
import statistics
import threading
from dataclasses import dataclass, field, fields, replace

from .analytics import (SUMMARY_FIELDS, LatencyParams, latency_ar, latency_fsd, latency_sd,
                        metrics_finalize, write_csv)
from .client import ClientConfig
from .errors import ConfigError, DomainError, ExactnessError
from .models import SyntheticModel, SyntheticParams, VocabConfig, linear_betas
from .protocol import MAX_FULL_VOCAB
from .queues import STRATEGIES
from .simulation import Scenario, SimResult, sim_run


@dataclass
class ExperimentConfig:
    mode: str = "fsd"
    transport: str = "sim"
    host: str = "127.0.0.1"
    port: int = 0
    seeds: tuple[int, ...] = (42,)
    vocab: int = 32
    exits: int = 8
    alpha: float = 0.8
    beta: tuple[float, ...] | None = None
    beta_min: float = 0.2
    beta_max: float = 0.95
    sharpness: float = 3.0
    gamma: int = 4
    n: int = 200
    threads: int = 3
    client_q: str = "priority"
    server_q: str = "priority"
    verify: str = "greedy"
    payload: str = "compact"
    T_c: float = 42.0
    T_p: float = 25.5
    T_q: float = 442.0
    T_r: float = 5.0
    prompt: tuple[int, ...] = (1, 2, 3)
    hit_pattern: str = ""
    inject_latency: bool = False
    adapter: str = ""

    def betas(self) -> tuple[float, ...]:
        if self.beta is not None:
            return self.beta
        return linear_betas(self.exits, self.beta_min, self.beta_max)

    def params(self, seed: int) -> SyntheticParams:
        return SyntheticParams(seed, VocabConfig(self.vocab), self.exits, self.alpha,
                               self.betas(), self.sharpness)

    def client_config(self, seed: int) -> ClientConfig:
        return ClientConfig(self.gamma, self.n, self.threads, self.client_q, self.verify,
                            self.payload, self.T_r, self.mode == "fsd", seed, self.hit_pattern)

    def scenario(self, seed: int, mode: str | None = None, trace: bool = True) -> Scenario:
        return Scenario(mode or self.mode, self.params(seed), self.client_config(seed),
                        self.prompt, self.server_q, self.T_c, self.T_p, self.T_q, self.T_r,
                        trace=trace)

    def validate(self) -> "ExperimentConfig":
        problems = []

        def need(ok, key, why):
            if not ok:
                problems.append((key, why))

        need(self.mode in ("ar", "sd", "fsd"), "mode", "must be ar, sd or fsd")
        need(self.transport in ("sim", "tcp"), "transport", "must be sim or tcp")
        need(0 <= self.port < 65536, "port", "must be 0..65535")
        need(len(self.seeds) > 0, "seeds", "at least one seed required")
        need(self.vocab >= 2, "vocab", "must be >= 2")
        need(self.exits >= 1, "exits", "must be >= 1")
        need(self.gamma >= 1, "gamma", "must be >= 1")
        need(self.n >= 1, "n", "must be >= 1")
        need(self.threads >= 0, "threads", "must be >= 0")
        need(self.client_q in STRATEGIES, "client_q", "must be priority, fifo or random")
        need(self.server_q in ("priority", "fifo"), "server_q", "must be priority or fifo")
        need(self.verify in ("greedy", "stochastic"), "verify", "must be greedy or stochastic")
        need(self.payload in ("compact", "full"), "payload", "must be compact or full")
        need(not (self.verify == "stochastic" and self.payload != "full"), "payload",
             "stochastic verification needs payload=full")
        need(not (self.payload == "full" and self.vocab > MAX_FULL_VOCAB), "payload",
             f"full payload needs vocab <= {MAX_FULL_VOCAB}")
        need(0.0 <= self.alpha <= 1.0, "alpha", "must lie in [0, 1]")
        for name in ("T_c", "T_p", "T_q", "T_r"):
            need(getattr(self, name) >= 0, name, "must be >= 0")
        need(len(self.prompt) > 0, "prompt", "must be non-empty")
        need(all(0 <= t < self.vocab for t in self.prompt), "prompt", "token ids must be < vocab")
        need(set(self.hit_pattern) <= {"0", "1"}, "hit_pattern", "only 0 and 1 allowed")
        need(not (self.adapter and self.verify != "greedy"), "adapter", "adapters support greedy only")
        if self.beta is not None:
            need(len(self.beta) == self.exits - 1, "beta", f"need {self.exits - 1} values")
        if not problems:
            try:
                self.params(self.seeds[0])
            except DomainError as exc:
                problems.append(("beta", str(exc)))
        if problems:
            raise ConfigError(problems)
        return self


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(","))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


_ALIASES = {"seed": "seeds", "L": "exits", "worker_threads": "threads", "V": "vocab"}


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines into a validated :class:`ExperimentConfig`."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values, problems = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append((f"line {lineno}", "expected key = value"))
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in types:
            problems.append((key, "unknown key"))
            continue
        values[key] = value
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    kwargs = {}
    for key, value in values.items():
        if not isinstance(value, str):
            kwargs[key] = value
            continue
        try:
            kwargs[key] = _convert(key, value)
        except ValueError as exc:
            problems.append((key, f"bad value {value!r}: {exc}"))
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**kwargs).validate()


def _convert(key: str, value: str):
    if key in ("seeds", "prompt"):
        return _ints(value)
    if key == "beta":
        return _floats(value)
    if key in ("port", "vocab", "exits", "gamma", "n", "threads"):
        return int(value)
    if key in ("alpha", "beta_min", "beta_max", "sharpness", "T_c", "T_p", "T_q", "T_r"):
        return float(value)
    if key == "inject_latency":
        if value.lower() not in ("0", "1", "true", "false", "yes", "no"):
            raise ValueError("expected a boolean")
        return value.lower() in ("1", "true", "yes")
    return value


def load_config(path: str, **overrides) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)


# ---------------------------------------------------------------------------
# running


def make_model(cfg: ExperimentConfig, seed: int):
    if cfg.adapter:
        from .adapter import AdapterModel
        return AdapterModel(shlex.split(cfg.adapter), cfg.vocab, cfg.exits)
    return SyntheticModel(cfg.params(seed))


def run_seed(cfg: ExperimentConfig, seed: int, mode: str | None = None, trace: bool = True) -> SimResult:
    """One session for ``seed`` over the configured transport."""
    mode = mode or cfg.mode
    if cfg.transport == "sim" and not cfg.adapter:
        return sim_run(cfg.scenario(seed, mode, trace))
    return tcp_run(cfg, seed, mode)


def tcp_run(cfg: ExperimentConfig, seed: int, mode: str) -> SimResult:
    """Loopback session: an in-process server thread plus the threaded client."""
    from .tcp import FramedSocket, Injected, SessionServer, ar_generate, client_generate

    inject = Injected(cfg.T_p, cfg.T_q, cfg.T_r) if cfg.inject_latency else Injected()
    server_model = make_model(cfg, seed)
    server = SessionServer(server_model, cfg.host, cfg.port, cfg.verify, cfg.server_q,
                           stream_exits=mode == "fsd", inject=inject)
    box = {}
    th = threading.Thread(target=lambda: box.setdefault("core", server.serve_one()), daemon=True)
    th.start()
    client_model = make_model(cfg, seed)
    try:
        session = FramedSocket.connect(*server.address)
        ccfg = replace(cfg.client_config(seed), predraft=mode == "fsd")
        try:
            if mode == "ar":
                run = ar_generate(ccfg, client_model, session, cfg.prompt, inject)
            else:
                run = client_generate(ccfg, client_model, session, cfg.prompt, inject)
        finally:
            session.close()
        th.join(timeout=10)
    finally:
        server.close()
        for m in (server_model, client_model):
            if hasattr(m, "close"):
                m.close()
    core = box.get("core")
    run.core.metrics.server_discards = server.last_discards
    if mode == "fsd" and core is not None:
        run.core.attach_earliest(core.earliest)
    return SimResult(run.tokens, run.metrics, run.rounds, run.wall_ms, [])


def summary_row(cfg: ExperimentConfig, seed: int, mode: str, res: SimResult) -> dict:
    tau, miss, avg_ee = metrics_finalize(res.metrics)
    row = {"mode": mode, "n": cfg.n, "gamma": cfg.gamma, "threads": cfg.threads,
           "client_q": cfg.client_q, "server_q": cfg.server_q, "seed": seed,
           "tau": tau, "miss_rate": miss, "avg_ee": avg_ee, "wall_ms": res.wall_ms}
    if mode == "ar":
        row.update(tau=1.0, miss_rate=None, avg_ee=None)
    elif mode == "sd":
        row.update(avg_ee=None)
    return row


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict] = field(default_factory=list)
    runs: dict[int, SimResult] = field(default_factory=dict)

    def summary_csv(self) -> str:
        return write_csv(self.rows, SUMMARY_FIELDS)


def run_experiment(cfg: ExperimentConfig, trace: bool = True) -> ExperimentResult:
    """One summary row per seed, sorted by seed."""
    out = ExperimentResult(cfg)
    for seed in sorted(cfg.seeds):
        res = run_seed(cfg, seed, trace=trace)
        out.runs[seed] = res
        out.rows.append(summary_row(cfg, seed, cfg.mode, res))
    return out


COMPARE_FIELDS = ["seed", "wall_ar", "wall_sd", "wall_fsd", "speedup_ar_sd", "pred_ar_sd",
                  "speedup_sd_fsd", "pred_sd_fsd", "tau", "miss_rate", "tokens_match"]


def predictions(cfg: ExperimentConfig, sd: SimResult, fsd: SimResult) -> tuple[float, float]:
    """Closed-form AR->SD and SD->FSD speedups at the measured tau and r."""
    tau_sd, _, _ = metrics_finalize(sd.metrics)
    tau_f, r, _ = metrics_finalize(fsd.metrics)
    ar = latency_ar(LatencyParams(cfg.T_p, cfg.T_q, cfg.T_c, cfg.T_r, cfg.gamma, cfg.n))
    lat_sd = latency_sd(LatencyParams(cfg.T_p, cfg.T_q, cfg.T_c, cfg.T_r, cfg.gamma,
                                      sd.metrics.tokens_emitted, tau_sd, 1.0))
    lat_fsd = latency_fsd(LatencyParams(cfg.T_p, cfg.T_q, cfg.T_c, cfg.T_r, cfg.gamma,
                                        fsd.metrics.tokens_emitted, tau_f, r))
    return ar / lat_sd, lat_sd / lat_fsd


def compare_modes(cfg: ExperimentConfig) -> list[dict]:
    """Run AR, SD and FSD per seed; greedy token streams must agree exactly."""
    rows = []
    for seed in sorted(cfg.seeds):
        ar = run_seed(cfg, seed, "ar", trace=False)
        sd = run_seed(cfg, seed, "sd", trace=False)
        fsd = run_seed(cfg, seed, "fsd", trace=False)
        n = cfg.n
        match = ar.tokens[:n] == sd.tokens[:n] == fsd.tokens[:n] and sd.tokens == fsd.tokens
        if cfg.verify == "greedy" and not match:
            raise ExactnessError(f"seed {seed}: token streams differ across modes")
        pred_ar_sd, pred_sd_fsd = predictions(cfg, sd, fsd)
        _, r, _ = metrics_finalize(fsd.metrics)
        tau, _, _ = metrics_finalize(sd.metrics)
        rows.append({
            "seed": seed, "wall_ar": ar.wall_ms, "wall_sd": sd.wall_ms, "wall_fsd": fsd.wall_ms,
            "speedup_ar_sd": ar.wall_ms / sd.wall_ms if sd.wall_ms else None,
            "pred_ar_sd": pred_ar_sd,
            "speedup_sd_fsd": sd.wall_ms / fsd.wall_ms if fsd.wall_ms else None,
            "pred_sd_fsd": pred_sd_fsd, "tau": tau, "miss_rate": r, "tokens_match": match,
        })
    return rows


def mean_row(rows: list[dict]) -> dict:
    out = {"seed": "mean"}
    for key in COMPARE_FIELDS[1:]:
        vals = [r[key] for r in rows if isinstance(r.get(key), (int, float))]
        if vals:
            out[key] = statistics.fmean(vals)
    out["tokens_match"] = all(r["tokens_match"] for r in rows)
    return out
