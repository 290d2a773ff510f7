"""Seeded synthetic draft/target models with early exits.

No ML runtime is involved. Every distribution is an argmax-peaked vector whose
argmax comes from the PRF in :mod:`specedge.kernels`:

* the final exit's argmax at context ``x`` is ``prf(seed, FINAL, x) % V``;
* exit ``i < L`` copies it when an independent coin keyed on ``(seed, x, i)``
  lands below ``beta[i]``, otherwise it picks a different PRF-chosen token;
* the draft model does the same with ``alpha``.

The argmax gets weight ``exp(s)`` and every other token weight 1. The draft and
the final exit use ``s = sharpness``; exit ``i`` uses ``sharpness * i / L`` so
that deeper exits are more confident.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import kernels
from .errors import DomainError

# PRF tag kinds (tag = kind << 32 | index)
FINAL = 1
EXIT_COIN = 2
EXIT_ALT = 3
DRAFT_COIN = 4
DRAFT_ALT = 5
DRAFT_SAMPLE = 6
VERIFY = 7
QUEUE = 8
AR_SAMPLE = 9


def tag(kind: int, index: int = 0) -> int:
    return (kind << 32) | (index & 0xFFFFFFFF)


@dataclass(frozen=True)
class VocabConfig:
    size: int

    def __post_init__(self):
        if self.size < 2:
            raise DomainError(f"vocab size must be >= 2, got {self.size}")


@dataclass(frozen=True)
class SyntheticParams:
    seed: int
    vocab: VocabConfig
    num_exits: int
    alpha: float
    beta: tuple[float, ...] = ()
    sharpness: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if self.num_exits < 1:
            raise DomainError("num_exits must be >= 1")
        if len(self.beta) != self.num_exits - 1:
            raise DomainError(
                f"need {self.num_exits - 1} beta values for {self.num_exits} exits, got {len(self.beta)}"
            )
        for p in (self.alpha, *self.beta):
            if not 0.0 <= p <= 1.0:
                raise DomainError(f"probability out of [0, 1]: {p}")
        if any(later < earlier for earlier, later in zip(self.beta, self.beta[1:])):
            raise DomainError("beta must be non-decreasing in exit index")
        if not self.sharpness > 0:
            raise DomainError("sharpness must be positive")


def linear_betas(num_exits: int, lo: float, hi: float) -> tuple[float, ...]:
    """``num_exits - 1`` agreement rates spaced evenly from ``lo`` to ``hi``."""
    k = num_exits - 1
    if k <= 0:
        return ()
    if k == 1:
        return (hi,)
    return tuple(lo + (hi - lo) * j / (k - 1) for j in range(k))


class TokenSeq:
    """Immutable token sequence carrying its incremental context hash."""

    __slots__ = ("tokens", "hash")

    def __init__(self, tokens: Iterable[int] = (), _hash: int | None = None):
        self.tokens = tuple(tokens)
        self.hash = kernels.backend.fold(0, self.tokens) if _hash is None else _hash

    @classmethod
    def of(cls, seq) -> "TokenSeq":
        return seq if isinstance(seq, TokenSeq) else cls(seq)

    def extend(self, more: Sequence[int]) -> "TokenSeq":
        more = tuple(more)
        return TokenSeq(self.tokens + more, kernels.backend.fold(self.hash, more))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def __eq__(self, other):
        if isinstance(other, TokenSeq):
            return self.tokens == other.tokens
        return self.tokens == tuple(other)

    def __hash__(self):
        return hash(self.tokens)

    def __repr__(self):
        return f"TokenSeq({list(self.tokens)})"


def peaked(vocab: int, argmax: int, sharpness: float) -> list[float]:
    w = math.exp(sharpness)
    z = w + (vocab - 1)
    probs = [1.0 / z] * vocab
    probs[argmax] = w / z
    return probs


def peak_mass(vocab: int, sharpness: float) -> float:
    w = math.exp(sharpness)
    return w / (w + (vocab - 1))


def confidence(dist: Sequence[float]) -> float:
    """Confidence of a softmax output: its largest probability."""
    return max(dist)


def softmax(logits: Sequence[float]) -> list[float]:
    m = max(logits)
    e = [math.exp(z - m) for z in logits]
    s = sum(e)
    return [v / s for v in e]


def sample_index(probs: Sequence[float], u: float) -> int:
    """Inverse-CDF draw for ``u`` in [0, 1)."""
    acc = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p <= 0:
            continue
        acc += p
        last = i
        if u < acc:
            return i
    return last


@dataclass
class SyntheticModel:
    """Draft model plus an ``L``-exit target, both driven by one seed."""

    params: SyntheticParams
    backend: object = None
    key: int = field(init=False)

    def __post_init__(self):
        if self.backend is None:
            self.backend = kernels.backend
        elif isinstance(self.backend, str):
            self.backend = kernels.load(self.backend)
        self.key = self.backend.mix(self.params.seed & 0xFFFFFFFFFFFFFFFF)

    @property
    def vocab(self) -> int:
        return self.params.vocab.size

    @property
    def num_exits(self) -> int:
        return self.params.num_exits

    # -- helpers --------------------------------------------------------
    def _ctx(self, prefix) -> TokenSeq:
        seq = TokenSeq.of(prefix)
        if len(seq) == 0:
            raise DomainError("prefix must be non-empty")
        return seq

    def check_tokens(self, tokens: Iterable[int]) -> None:
        v = self.vocab
        for t in tokens:
            if not 0 <= t < v:
                raise DomainError(f"token id {t} outside vocabulary of size {v}")

    def _exit_rule(self, i: int) -> tuple[int, int, float]:
        if not 1 <= i <= self.num_exits:
            raise DomainError(f"exit index {i} outside 1..{self.num_exits}")
        if i == self.num_exits:
            return tag(EXIT_COIN, i), tag(EXIT_ALT, i), 1.0
        return tag(EXIT_COIN, i), tag(EXIT_ALT, i), self.params.beta[i - 1]

    def exit_sharpness(self, i: int) -> float:
        return self.params.sharpness * i / self.num_exits

    def exit_top_prob(self, i: int) -> float:
        return peak_mass(self.vocab, self.exit_sharpness(i))

    def draft_top_prob(self) -> float:
        return peak_mass(self.vocab, self.params.sharpness)

    # -- argmax ---------------------------------------------------------
    def exit_argmax_at(self, h: int, i: int) -> int:
        coin, alt, prob = self._exit_rule(i)
        return self.backend.pick(self.key, h, self.vocab, coin, alt, tag(FINAL), prob)

    def draft_argmax_at(self, h: int) -> int:
        return self.backend.pick(
            self.key, h, self.vocab, tag(DRAFT_COIN), tag(DRAFT_ALT), tag(FINAL), self.params.alpha
        )

    def exit_argmax(self, prefix, i: int) -> int:
        return self.exit_argmax_at(self._ctx(prefix).hash, i)

    def draft_argmax(self, prefix) -> int:
        return self.draft_argmax_at(self._ctx(prefix).hash)

    # -- distributions --------------------------------------------------
    def target_distribution_at(self, h: int, i: int) -> list[float]:
        return peaked(self.vocab, self.exit_argmax_at(h, i), self.exit_sharpness(i))

    def draft_distribution_at(self, h: int) -> list[float]:
        return peaked(self.vocab, self.draft_argmax_at(h), self.params.sharpness)

    def target_distribution(self, prefix, i: int) -> list[float]:
        return self.target_distribution_at(self._ctx(prefix).hash, i)

    def draft_distribution(self, prefix) -> list[float]:
        return self.draft_distribution_at(self._ctx(prefix).hash)

    # -- fast paths -----------------------------------------------------
    def greedy_draft(self, prefix, gamma: int) -> list[int]:
        h = self._ctx(prefix).hash
        return self.backend.greedy_draft(
            self.key, h, self.vocab, tag(DRAFT_COIN), tag(DRAFT_ALT), tag(FINAL),
            self.params.alpha, gamma,
        )

    def sampled_draft(self, prefix, gamma: int, rng_seed: int = 0):
        """Sample ``gamma`` tokens; returns (tokens, full distributions)."""
        h = self._ctx(prefix).hash
        b = self.backend
        sample_tag = tag(DRAFT_SAMPLE, rng_seed)
        tokens, dists = [], []
        for _ in range(gamma):
            dist = self.draft_distribution_at(h)
            t = sample_index(dist, b.unit(b.prf(self.key, sample_tag, h)))
            tokens.append(t)
            dists.append(dist)
            h = b.fold(h, (t,))
        return tokens, dists

    def verify_exit_greedy(self, prefix, draft: Sequence[int], i: int) -> tuple[int, list[int]]:
        coin, alt, prob = self._exit_rule(i)
        h = self._ctx(prefix).hash
        return self.backend.greedy_scan(self.key, h, self.vocab, coin, alt, tag(FINAL), prob, draft)

    def draft_greedy(self, prefix, gamma: int) -> tuple[list[int], list[float]]:
        tokens = self.greedy_draft(prefix, gamma)
        return tokens, [self.draft_top_prob()] * len(tokens)

    def verify_greedy_exit(self, prefix, draft: Sequence[int], i: int):
        """Greedy check at exit ``i``: (accepted, output, per-token probabilities)."""
        delta, out = self.verify_exit_greedy(prefix, draft, i)
        return delta, out, [self.exit_top_prob(i)] * len(out)

    def greedy_rollout(self, prefix, n: int) -> list[int]:
        return self.backend.greedy_rollout(self.key, self._ctx(prefix).hash, self.vocab, tag(FINAL), n)

    def rollout(self, prefix, n: int) -> tuple[list[int], list[float]]:
        """Greedy decoding at the final exit: (tokens, chosen-token probabilities)."""
        return self.greedy_rollout(prefix, n), [self.exit_top_prob(self.num_exits)] * n

    def context_seed(self, prefix, kind: int, index: int = 0) -> int:
        """A 64-bit seed bound to (model seed, context, purpose)."""
        return self.backend.prf(self.key, tag(kind, index), TokenSeq.of(prefix).hash)


def target_distribution(params: SyntheticParams, prefix, exit_index: int) -> list[float]:
    model = SyntheticModel(params)
    model.check_tokens(TokenSeq.of(prefix))
    return model.target_distribution(prefix, exit_index)


def draft_distribution(params: SyntheticParams, prefix) -> list[float]:
    model = SyntheticModel(params)
    model.check_tokens(TokenSeq.of(prefix))
    return model.draft_distribution(prefix)
