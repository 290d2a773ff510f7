"""Draft/verify mathematics: gamma-token drafting, greedy and rejection-sampling
verification, residual resampling and per-exit verification."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import DomainError, ProtocolError
from .models import VERIFY, SyntheticModel, SyntheticParams, TokenSeq, sample_index


@dataclass(frozen=True)
class DraftBatch:
    """``gamma`` drafted tokens plus their probability payload.

    ``per_token`` holds one chosen-token probability per position in compact
    mode, or one full distribution per position when ``full`` is set.
    """

    round_id: int
    prefix_len: int
    tokens: tuple[int, ...]
    per_token: tuple = ()
    full: bool = False

    @property
    def gamma(self) -> int:
        return len(self.tokens)

    def chosen_probs(self) -> list[float]:
        if self.full:
            return [dist[t] for dist, t in zip(self.per_token, self.tokens)]
        return list(self.per_token)

    def renumbered(self, round_id: int) -> "DraftBatch":
        return DraftBatch(round_id, self.prefix_len, self.tokens, self.per_token, self.full)


@dataclass(frozen=True)
class VerifyResult:
    accepted: int
    output: tuple[int, ...]
    per_token_probs: tuple[float, ...]
    exit_index: int = 0

    @property
    def confidence(self) -> float:
        return max(self.per_token_probs)


def draft(model, prefix, gamma: int, mode: str = "greedy", rng_seed: int = 0,
          payload: str = "compact", round_id: int = 0) -> DraftBatch:
    """Draft ``gamma`` tokens autoregressively after ``prefix``."""
    seq = TokenSeq.of(prefix)
    if len(seq) == 0:
        raise DomainError("prefix must be non-empty")
    full = payload == "full"
    if gamma <= 0:
        return DraftBatch(round_id, len(seq), (), (), full)
    if mode == "greedy":
        tokens, top = model.draft_greedy(seq, gamma)
        if full:
            dists = _draft_dists(model, seq, tokens)
            return DraftBatch(round_id, len(seq), tuple(tokens), tuple(tuple(d) for d in dists), True)
        return DraftBatch(round_id, len(seq), tuple(tokens), tuple(top), False)
    if mode == "sampled":
        tokens, dists = model.sampled_draft(seq, gamma, rng_seed)
        if full:
            return DraftBatch(round_id, len(seq), tuple(tokens), tuple(tuple(d) for d in dists), True)
        return DraftBatch(round_id, len(seq), tuple(tokens),
                          tuple(d[t] for d, t in zip(dists, tokens)), False)
    raise DomainError(f"unknown draft mode {mode!r}")


def _draft_dists(model, seq: TokenSeq, tokens):
    dists = []
    for t in tokens:
        dists.append(model.draft_distribution(seq))
        seq = seq.extend((t,))
    return dists


def verify_greedy(target_exit_fn: Callable, prefix, batch: DraftBatch) -> VerifyResult:
    """Accept the longest drafted prefix matching the target's argmax.

    ``target_exit_fn(context)`` returns ``(argmax_token, probability)`` for the
    next token after ``context``.
    """
    ctx = TokenSeq.of(prefix)
    out, probs = [], []
    for x in batch.tokens:
        y, q = target_exit_fn(ctx)
        out.append(y)
        probs.append(q)
        if y != x:
            return VerifyResult(len(out) - 1, tuple(out), tuple(probs))
        ctx = ctx.extend((x,))
    y, q = target_exit_fn(ctx)
    out.append(y)
    probs.append(q)
    return VerifyResult(batch.gamma, tuple(out), tuple(probs))


def acceptance_probability(q_x, p_x):
    """Probability of keeping drafted token x: ``min(1, q(x)/p(x))``."""
    if p_x <= 0:
        raise ProtocolError("drafted token has zero draft probability")
    return min(1, q_x / p_x)


def residual_distribution(q: Sequence, p: Sequence) -> list:
    """``normalize(max(0, q - p))``; works with floats or Fractions."""
    if len(q) != len(p):
        raise DomainError("q and p have different sizes")
    diff = [qi - pi if qi > pi else 0 * qi for qi, pi in zip(q, p)]
    total = sum(diff)
    if total <= 0:
        raise DomainError("residual undefined: q does not exceed p anywhere")
    return [d / total for d in diff]


def verify_stochastic(target_dist_fn: Callable[[int], Sequence[float]], batch: DraftBatch,
                      rng_seed) -> VerifyResult:
    """Rejection-sampling verification; the emitted tokens follow ``q`` exactly.

    ``target_dist_fn(k)`` gives the target distribution for draft position
    ``k`` (``k == gamma`` is the bonus position). ``rng_seed`` may be an int
    or a ready :class:`random.Random`.
    """
    if not batch.full:
        raise ProtocolError("stochastic verification needs full draft distributions")
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    out, probs = [], []
    for k, x in enumerate(batch.tokens):
        q = target_dist_fn(k)
        p = batch.per_token[k]
        if rng.random() < acceptance_probability(q[x], p[x]):
            out.append(x)
            probs.append(q[x])
            continue
        try:
            res = residual_distribution(q, p)
        except DomainError:
            # only reachable through float rounding of p; rejection has measure 0
            res = q
        y = sample_index(res, rng.random())
        out.append(y)
        probs.append(q[y])
        return VerifyResult(k, tuple(out), tuple(probs))
    q = target_dist_fn(batch.gamma)
    y = sample_index(q, rng.random())
    out.append(y)
    probs.append(q[y])
    return VerifyResult(batch.gamma, tuple(out), tuple(probs))


def verify_all_exits(model, prefix, batch: DraftBatch, mode: str = "greedy",
                     exits: Sequence[int] | None = None) -> list[VerifyResult]:
    """Verify ``batch`` independently at every exit (or at ``exits``), in exit order."""
    if isinstance(model, SyntheticParams):
        model = SyntheticModel(model)
    seq = TokenSeq.of(prefix)
    if exits is None:
        exits = range(1, model.num_exits + 1)
    results = []
    for i in exits:
        if mode == "greedy":
            delta, out, probs = model.verify_greedy_exit(seq, batch.tokens, i)
            results.append(VerifyResult(delta, tuple(out), tuple(probs), i))
        elif mode == "stochastic":
            dist_fn = _position_dists(model, seq, batch.tokens, i)
            r = verify_stochastic(dist_fn, batch, model.context_seed(seq, VERIFY, i))
            results.append(VerifyResult(r.accepted, r.output, r.per_token_probs, i))
        else:
            raise DomainError(f"unknown verification mode {mode!r}")
    return results


def _position_dists(model, seq: TokenSeq, tokens, i):
    hashes = [seq.hash]
    fold = model.backend.fold
    for t in tokens:
        hashes.append(fold(hashes[-1], (t,)))
    return lambda k: model.target_distribution_at(hashes[k], i)
