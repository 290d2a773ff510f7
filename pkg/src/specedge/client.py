"""Edge side of the protocol: drafting, early-exit ingestion, pre-drafting
into a per-round cache, and cache lookup when the final output arrives.

:class:`ClientCore` is transport-agnostic and not thread-safe; drivers (the
simulator, the TCP client) serialize access to it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .analytics import RunMetrics
from .errors import DomainError, ProtocolError
from .models import TokenSeq
from .protocol import ExitOutput
from .queues import ClientQueue
from .specdec import DraftBatch, draft


@dataclass
class ClientConfig:
    gamma: int = 4
    n: int = 200
    worker_threads: int = 3
    client_queue: str = "priority"
    verify_mode: str = "greedy"
    payload: str = "compact"
    t_r_ms: float = 5.0
    predraft: bool = True
    queue_seed: int = 0
    # '0' forces a miss at that lookup, '1' leaves it to the cache; cycled
    hit_pattern: str = ""

    def __post_init__(self):
        if self.gamma < 1:
            raise DomainError("gamma must be >= 1")
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if self.worker_threads < 0:
            raise DomainError("worker_threads must be >= 0")
        if self.verify_mode == "stochastic" and self.payload != "full":
            raise DomainError("stochastic verification needs the full payload")

    @property
    def draft_mode(self) -> str:
        return "sampled" if self.verify_mode == "stochastic" else "greedy"


class PreDraftCache:
    """Verified-output key -> pre-drafted batch, valid for one round."""

    def __init__(self):
        self._entries: dict[tuple, DraftBatch] = {}
        self.generation = 0
        self._lock = threading.Lock()

    def insert(self, key, entry: DraftBatch, generation: int) -> bool:
        with self._lock:
            if generation != self.generation:
                return False
            self._entries.setdefault(tuple(key), entry)
            return True

    def lookup(self, key) -> DraftBatch | None:
        with self._lock:
            return self._entries.get(tuple(key))

    def reset(self) -> None:
        with self._lock:
            self._entries.clear()
            self.generation += 1

    def __contains__(self, key):
        return self.lookup(key) is not None

    def __len__(self):
        return len(self._entries)


def cache_lookup(cache: PreDraftCache, final_output) -> DraftBatch | None:
    return cache.lookup(tuple(final_output))


def pre_draft(model, prefix, exit_output: ExitOutput, gamma: int, mode: str = "greedy",
              payload: str = "compact") -> DraftBatch:
    """Draft ``gamma`` tokens after ``prefix`` + the exit's verified tokens."""
    extended = TokenSeq.of(prefix).extend(exit_output.tokens)
    return draft(model, extended, gamma, mode, payload=payload)


def receiver_ingest(core: "ClientCore", msg: ExitOutput) -> str:
    return core.ingest(msg)


@dataclass
class PreDraftJob:
    key: tuple
    prefix: TokenSeq
    generation: int
    round_id: int
    msg: ExitOutput


@dataclass
class RoundRecord:
    round: int
    delta: int = 0
    tau_inst: int = 0
    hit: bool = False
    earliest_exit: int | None = None
    draft_calls: int = 0

    def as_row(self) -> dict:
        return {"round": self.round, "delta": self.delta, "tau_inst": self.tau_inst,
                "hit": self.hit, "earliest_exit": self.earliest_exit,
                "draft_calls": self.draft_calls}


@dataclass
class FinalOutcome:
    done: bool
    hit: bool = False
    batch: DraftBatch | None = None


class ClientCore:
    def __init__(self, config: ClientConfig, model, prompt):
        self.config = config
        self.model = model
        self.prefix = TokenSeq.of(prompt)
        if len(self.prefix) == 0:
            raise DomainError("prompt must be non-empty")
        model.check_tokens(self.prefix)
        self.round_id = 0
        self.queue = ClientQueue(config.client_queue, seed=config.queue_seed)
        self.cache = PreDraftCache()
        self.inflight: set[tuple[int, tuple]] = set()
        self.output: list[int] = []
        self.metrics = RunMetrics()
        self.records: list[RoundRecord] = []
        self.final: ExitOutput | None = None
        self.done = False
        self._lookups = 0

    # -- drafting -------------------------------------------------------
    def _fresh(self) -> DraftBatch:
        self.metrics.draft_calls += 1
        return draft(self.model, self.prefix, self.config.gamma, self.config.draft_mode,
                     payload=self.config.payload)

    def first_batch(self) -> DraftBatch:
        """Round 1's draft; it can only come from fresh drafting."""
        self.round_id = 1
        batch = self._fresh().renumbered(1)
        self.metrics.cache_misses += 1
        self.records.append(RoundRecord(1, hit=False, draft_calls=1))
        return batch

    # -- receiver -------------------------------------------------------
    def ingest(self, msg: ExitOutput) -> str:
        """Route one server message: ``"final"``, ``"queued"`` or ``"stale"``."""
        if msg.round_id < self.round_id:
            self.metrics.stale_drops += 1
            return "stale"
        if msg.round_id > self.round_id:
            raise ProtocolError(f"message for future round {msg.round_id} (current {self.round_id})")
        if msg.isfinal:
            if self.final is not None:
                raise ProtocolError(f"duplicate final output for round {msg.round_id}")
            self.final = msg
            return "final"
        self.queue.push(msg, msg.score)
        return "queued"

    # -- workers --------------------------------------------------------
    def next_job(self) -> PreDraftJob | None:
        """Pop the next exit worth pre-drafting (skipping duplicates)."""
        if not self.config.predraft:
            return None
        gen = self.cache.generation
        while True:
            msg = self.queue.pop()
            if msg is None:
                return None
            key = tuple(msg.tokens)
            if (gen, key) in self.inflight or key in self.cache:
                continue
            self.inflight.add((gen, key))
            self.metrics.predraft_calls += 1
            self.records[-1].draft_calls += 1
            return PreDraftJob(key, self.prefix, gen, self.round_id, msg)

    def run_job(self, job: PreDraftJob) -> DraftBatch:
        return pre_draft(self.model, job.prefix, job.msg, self.config.gamma,
                         self.config.draft_mode, self.config.payload)

    def finish_job(self, job: PreDraftJob, entry: DraftBatch) -> bool:
        self.inflight.discard((job.generation, job.key))
        ok = self.cache.insert(job.key, entry, job.generation)
        if not ok:
            self.metrics.predraft_discards += 1
        return ok

    # -- coordinator ----------------------------------------------------
    def on_final(self) -> FinalOutcome:
        """Consume the round's final output; returns the next batch unless done."""
        msg = self.final
        if msg is None:
            raise ProtocolError("no final output to consume")
        if msg.round_id != self.round_id:
            raise ProtocolError(f"final output for round {msg.round_id}, expected {self.round_id}")
        self.final = None
        rec = self.records[-1]
        rec.delta = msg.accepted
        rec.tau_inst = len(msg.tokens)
        self.prefix = self.prefix.extend(msg.tokens)
        self.output.extend(msg.tokens)
        self.metrics.rounds += 1
        self.metrics.tokens_emitted += len(msg.tokens)
        if len(self.output) >= self.config.n:
            self.done = True
            self._end_round()
            return FinalOutcome(True)

        entry = None
        if self.config.predraft and self._lookup_allowed():
            entry = cache_lookup(self.cache, msg.tokens)
        self._end_round()
        self.round_id += 1
        if entry is not None:
            self.metrics.cache_hits += 1
            self.records.append(RoundRecord(self.round_id, hit=True))
            return FinalOutcome(False, True, entry.renumbered(self.round_id))
        self.metrics.cache_misses += 1
        self.records.append(RoundRecord(self.round_id, hit=False, draft_calls=1))
        return FinalOutcome(False, False, self._fresh().renumbered(self.round_id))

    def _lookup_allowed(self) -> bool:
        pattern = self.config.hit_pattern
        j = self._lookups
        self._lookups += 1
        return not pattern or pattern[j % len(pattern)] != "0"

    def _end_round(self):
        self.cache.reset()
        self.queue.reset()

    def attach_earliest(self, earliest: dict[int, int | None]) -> None:
        """Merge server-side earliest-matching-exit data into the round log."""
        for rec in self.records:
            e = earliest.get(rec.round)
            rec.earliest_exit = e
            if e is not None:
                self.metrics.sum_earliest_matching_exit += e
                self.metrics.matched_rounds += 1
