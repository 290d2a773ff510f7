"""Deterministic discrete-event simulation of a client/server session.

Everything runs on a :class:`VirtualClock`. Messages go through the real
codec, so the simulated session sees exactly the bytes a socket would carry.
Timing model:

* drafting ``gamma`` tokens (fresh or pre-draft) costs ``gamma * T_p``;
* a cache hit costs ``T_r`` before the cached batch is sent;
* exit ``i`` of ``L`` completes ``(i / L) * T_q`` after verification starts;
* each direction is a serialized channel: a message occupies it for ``T_c``;
* the final output gets its own slot and arrives ``T_c`` after ``T_q``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .analytics import RunMetrics
from .client import ClientConfig, ClientCore, RoundRecord
from .errors import DomainError, ScenarioError
from .models import SyntheticModel, SyntheticParams
from .protocol import ArRequest, decode_frame, encode_frame
from .queues import ServerQueue
from .server import ServerCore


class VirtualClock:
    """Event loop ordered by (time, insertion sequence)."""

    def __init__(self):
        self.now = 0.0
        self._events: list = []
        self._seq = 0

    def at(self, when: float, fn, *args) -> None:
        if when < self.now:
            raise ValueError(f"cannot schedule in the past ({when} < {self.now})")
        heapq.heappush(self._events, (when, self._seq, fn, args))
        self._seq += 1

    def step(self) -> bool:
        if not self._events:
            return False
        when, _, fn, args = heapq.heappop(self._events)
        self.now = when
        fn(*args)
        return True

    def run(self) -> None:
        while self.step():
            pass

    def __len__(self):
        return len(self._events)


@dataclass
class SimChannel:
    latency_ms: float
    free_at: float = 0.0

    def __post_init__(self):
        if self.latency_ms < 0:
            raise DomainError("latency must be >= 0")

    def reserve(self, now: float) -> float:
        delivery = max(now, self.free_at) + self.latency_ms
        self.free_at = delivery
        return delivery


def sim_send(clock: VirtualClock, channel: SimChannel, message, now: float, deliver=None) -> float:
    """Serialize ``message`` onto ``channel``; ``deliver(decoded)`` fires on arrival."""
    frame = encode_frame(message)
    delivery = channel.reserve(now)
    if deliver is not None:
        clock.at(delivery, deliver, decode_frame(frame))
    return delivery


@dataclass
class Scenario:
    mode: str
    params: SyntheticParams
    client: ClientConfig
    prompt: tuple[int, ...] = (1, 2, 3)
    server_queue: str = "priority"
    T_c: float = 0.0
    T_p: float = 0.0
    T_q: float = 0.0
    T_r: float = 5.0
    backend: str | None = None
    trace: bool = True

    def __post_init__(self):
        if self.mode not in ("ar", "sd", "fsd"):
            raise DomainError(f"unknown mode {self.mode!r}")
        for name in ("T_c", "T_p", "T_q", "T_r"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")


@dataclass
class SimResult:
    tokens: list[int]
    metrics: RunMetrics
    rounds: list[RoundRecord]
    wall_ms: float
    trace: list[str] = field(default_factory=list)

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)


class _Sim:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.clock = VirtualClock()
        self.model = SyntheticModel(sc.params, backend=sc.backend)
        self.up = SimChannel(sc.T_c)
        self.down = SimChannel(sc.T_c)
        self.trace: list[str] = []
        self.end: float | None = None
        cfg = sc.client
        if sc.mode == "sd":
            cfg = _replace(cfg, predraft=False)
        self.client = ClientCore(cfg, self.model, sc.prompt)
        self.server = ServerCore(self.model, sc.prompt, cfg.verify_mode, stream_exits=sc.mode == "fsd")
        self.squeue = ServerQueue(sc.server_queue)
        self.idle = cfg.worker_threads if sc.mode == "fsd" else 0
        self.draft_ms = cfg.gamma * sc.T_p

    def log(self, actor, event, rnd, detail=""):
        if self.sc.trace:
            self.trace.append(f"{self.clock.now:.3f},{actor},{event},{rnd},{detail}")

    # -- client ---------------------------------------------------------
    def start(self):
        batch = self.client.first_batch()
        self.log("client", "draft", batch.round_id, _toks(batch.tokens))
        self.clock.at(self.clock.now + self.draft_ms, self.client_send, batch)

    def client_send(self, batch):
        self.log("client", "send_draft", batch.round_id, _toks(batch.tokens))
        sim_send(self.clock, self.up, batch, self.clock.now, self.server_recv)

    def client_recv(self, msg):
        kind = self.client.ingest(msg)
        self.log("client", f"recv_{'final' if msg.isfinal else 'exit'}", msg.round_id,
                 f"exit={msg.exit_index} tokens={_toks(msg.tokens)} {kind}")
        if kind == "final":
            self.client_final()
        elif kind == "queued":
            self.dispatch()

    def dispatch(self):
        while self.idle > 0:
            job = self.client.next_job()
            if job is None:
                return
            self.idle -= 1
            entry = self.client.run_job(job)
            self.log("client", "predraft_start", job.round_id, f"key={_toks(job.key)}")
            self.clock.at(self.clock.now + self.draft_ms, self.job_done, job, entry)

    def job_done(self, job, entry):
        self.idle += 1
        ok = self.client.finish_job(job, entry)
        self.log("client", "predraft_done" if ok else "predraft_discard", job.round_id,
                 f"key={_toks(job.key)}")
        self.dispatch()

    def client_final(self):
        rnd = self.client.round_id
        outcome = self.client.on_final()
        if outcome.done:
            self.end = self.clock.now
            self.log("client", "done", rnd, f"tokens={len(self.client.output)}")
            return
        if outcome.hit:
            self.log("client", "cache_hit", rnd, _toks(outcome.batch.tokens))
            delay = self.sc.T_r
        else:
            self.log("client", "cache_miss", rnd, _toks(outcome.batch.tokens))
            delay = self.draft_ms
        self.clock.at(self.clock.now + delay, self.client_send, outcome.batch)

    # -- server ---------------------------------------------------------
    def server_recv(self, batch):
        self.log("server", "recv_draft", batch.round_id, _toks(batch.tokens))
        outputs = self.server.handle(batch)
        L = self.model.num_exits
        start = self.clock.now
        for out in outputs:
            self.clock.at(start + out.exit_index / L * self.sc.T_q, self.exit_done, out)

    def exit_done(self, out):
        if out.isfinal:
            dropped = self.squeue.reset()
            self.squeue.discarded += dropped
            self.log("server", "send_final", out.round_id,
                     f"delta={out.accepted} tokens={_toks(out.tokens)} dropped={dropped}")
            frame = encode_frame(out)
            self.clock.at(self.clock.now + self.sc.T_c, self.client_recv, decode_frame(frame))
            return
        self.log("server", "exit_done", out.round_id, f"exit={out.exit_index} score={out.score:.6f}")
        self.squeue.push(out, out.score)
        self.clock.at(self.clock.now, self.sender_wake)

    def sender_wake(self):
        if self.down.free_at > self.clock.now:
            return
        msg = self.squeue.pop()
        if msg is None:
            return
        self.log("server", "send_exit", msg.round_id, f"exit={msg.exit_index}")
        delivery = sim_send(self.clock, self.down, msg, self.clock.now, self.client_recv)
        self.clock.at(delivery, self.sender_wake)

    # -- AR -------------------------------------------------------------
    def start_ar(self):
        req = ArRequest(1, self.sc.client.n)
        self.log("client", "send_ar", 1, f"n={req.n}")
        sim_send(self.clock, self.up, req, self.clock.now, self.server_ar)

    def server_ar(self, req):
        out = self.server.generate_ar(req)
        self.log("server", "recv_ar", req.round_id, f"n={req.n}")
        done = self.clock.now + req.n * self.sc.T_q
        frame = encode_frame(out)
        self.clock.at(done + self.sc.T_c, self.client_ar_final, decode_frame(frame))

    def client_ar_final(self, msg):
        c = self.client
        c.output.extend(msg.tokens)
        c.prefix = c.prefix.extend(msg.tokens)
        c.metrics.rounds = 1
        c.metrics.tokens_emitted = len(msg.tokens)
        c.records.append(RoundRecord(1, msg.accepted, len(msg.tokens)))
        self.end = self.clock.now
        self.log("client", "done", 1, f"tokens={len(msg.tokens)}")

    def run(self) -> SimResult:
        if self.sc.mode == "ar":
            self.start_ar()
        else:
            self.start()
        self.clock.run()
        if self.end is None:
            raise ScenarioError("simulation stalled before completion", self.trace)
        self.client.metrics.server_discards = self.squeue.discarded
        if self.sc.mode == "fsd":
            self.client.attach_earliest(self.server.earliest)
        return SimResult(list(self.client.output), self.client.metrics, self.client.records,
                         self.end, self.trace)


def _replace(cfg: ClientConfig, **kw) -> ClientConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def _toks(tokens) -> str:
    return " ".join(map(str, tokens))


def sim_run(scenario: Scenario) -> SimResult:
    """Execute one session on the virtual clock."""
    return _Sim(scenario).run()
