"""Cloud side: verify each draft batch at every exit, stream early-exit outputs
through a send queue, then dispatch the final output and drop what is unsent."""

from __future__ import annotations

import random
from typing import Callable

from .errors import DomainError, ProtocolError
from .models import AR_SAMPLE, TokenSeq, sample_index
from .protocol import ArRequest, ExitOutput
from .queues import ServerQueue
from .specdec import DraftBatch, VerifyResult, verify_all_exits


def priority_score(result: VerifyResult) -> float:
    return max(result.per_token_probs)


class ServerCore:
    """Session state: the verified prefix and the round counter."""

    def __init__(self, model, prompt, mode: str = "greedy", stream_exits: bool = True):
        if mode not in ("greedy", "stochastic"):
            raise DomainError(f"unknown verification mode {mode!r}")
        self.model = model
        self.mode = mode
        self.stream_exits = stream_exits
        self.prefix = TokenSeq.of(prompt)
        self.last_round = 0
        self.earliest: dict[int, int | None] = {}

    def handle(self, batch: DraftBatch) -> list[ExitOutput]:
        """Verify ``batch``; returns exit outputs in exit order, final last."""
        if batch.round_id != self.last_round + 1:
            raise ProtocolError(f"round {batch.round_id} out of order (last {self.last_round})")
        if batch.prefix_len != len(self.prefix):
            raise ProtocolError(f"prefix length {batch.prefix_len} != session prefix {len(self.prefix)}")
        if batch.gamma < 1:
            raise ProtocolError("empty draft batch")
        self.model.check_tokens(batch.tokens)
        L = self.model.num_exits
        exits = range(1, L + 1) if self.stream_exits else (L,)
        results = verify_all_exits(self.model, self.prefix, batch, self.mode, exits)
        final = results[-1]
        if self.stream_exits:
            self.earliest[batch.round_id] = next(
                (r.exit_index for r in results if r.output == final.output), None)
        self.prefix = self.prefix.extend(final.output)
        self.last_round = batch.round_id
        return [
            ExitOutput(batch.round_id, r.exit_index, r.accepted, r.output,
                       priority_score(r), r.exit_index == L)
            for r in results
        ]

    def generate_ar(self, req: ArRequest) -> ExitOutput:
        """Plain decoding of ``req.n`` tokens at the final exit, one response."""
        if req.round_id != self.last_round + 1:
            raise ProtocolError(f"round {req.round_id} out of order (last {self.last_round})")
        if req.n < 1:
            raise ProtocolError("AR request for zero tokens")
        L = self.model.num_exits
        if self.mode == "greedy":
            tokens, probs = self.model.rollout(self.prefix, req.n)
        else:
            tokens, probs = [], []
            seq = self.prefix
            for _ in range(req.n):
                q = self.model.target_distribution(seq, L)
                rng = random.Random(self.model.context_seed(seq, AR_SAMPLE))
                t = sample_index(q, rng.random())
                tokens.append(t)
                probs.append(q[t])
                seq = seq.extend((t,))
        self.prefix = self.prefix.extend(tokens)
        self.last_round = req.round_id
        return ExitOutput(req.round_id, L, req.n - 1, tuple(tokens), max(probs), True)


def dispatch_final(queue: ServerQueue, send: Callable, final: ExitOutput) -> int:
    """Drop unsent early exits, then send the final output; returns drops."""
    with queue.send_lock:
        dropped = queue.reset()
        queue.discarded += dropped
        send(final)
    return dropped


def listener_handle(core: ServerCore, queue: ServerQueue, send: Callable, batch: DraftBatch,
                    exit_delay: Callable[[int], None] | None = None) -> list[ExitOutput]:
    """Verify, queue exits 1..L-1 by score, send the final flagged, reset the queue.

    ``exit_delay(i)`` is called before exit ``i`` is released, letting a real
    deployment model staggered exit completion.
    """
    outputs = core.handle(batch)
    for out in outputs[:-1]:
        if exit_delay:
            exit_delay(out.exit_index)
        queue.push(out, out.score)
    if exit_delay:
        exit_delay(outputs[-1].exit_index)
    dispatch_final(queue, send, outputs[-1])
    return outputs


def sender_drain(queue: ServerQueue, send: Callable) -> int:
    """Send queued early exits one at a time until the queue is empty."""
    sent = 0
    while True:
        with queue.send_lock:
            msg = queue.pop()
            if msg is None:
                return sent
            send(msg)
        sent += 1
