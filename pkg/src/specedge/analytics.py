"""Closed-form latency, speedup and API-cost models, and run metrics.

Latencies are in milliseconds, prices in dollars per million tokens.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DomainError


@dataclass(frozen=True)
class LatencyParams:
    T_p: float = 0.0
    T_q: float = 0.0
    T_c: float = 0.0
    T_r: float = 0.0
    gamma: int = 4
    n: int = 200
    tau: float = 1.0
    miss_rate: float = 1.0

    def __post_init__(self):
        for name in ("T_p", "T_q", "T_c", "T_r"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise DomainError("miss_rate must lie in [0, 1]")
        if self.tau > self.gamma + 1 + 1e-9:
            raise DomainError("tau cannot exceed gamma + 1")

    @property
    def c(self) -> float:
        """Draft/target forward-pass latency ratio."""
        return self.T_p / self.T_q if self.T_q else math.inf


def latency_ar(p: LatencyParams) -> float:
    """Cloud autoregressive: one round trip, ``n`` target passes."""
    return 2 * p.T_c + p.n * p.T_q


def _rounds(p: LatencyParams) -> float:
    if p.tau <= 0:
        raise DomainError("tau must be positive")
    return p.n / p.tau


def latency_sd(p: LatencyParams) -> float:
    return _rounds(p) * (2 * p.T_c + p.gamma * p.T_p + p.T_q)


def latency_fsd(p: LatencyParams) -> float:
    r = p.miss_rate
    return _rounds(p) * (2 * p.T_c + r * p.gamma * p.T_p + (1 - r) * p.T_r + p.T_q)


def speedup_projection(gamma: float, c: float, r: float) -> float:
    """Per-round SD -> FSD speedup ignoring communication and sync cost."""
    if c < 0 or not 0.0 <= r <= 1.0:
        raise DomainError("need c >= 0 and r in [0, 1]")
    return (gamma * c + 1) / (r * gamma * c + 1)


def _axis(lo: float, hi: float, steps: int) -> list[float]:
    if steps < 1:
        raise DomainError("steps must be >= 1")
    if steps == 1:
        return [lo]
    return [lo + (hi - lo) * k / (steps - 1) for k in range(steps)]


def heatmap_grid(gamma: float, c_range: tuple[float, float], r_range: tuple[float, float],
                 steps: int | tuple[int, int]):
    """Row-major grid of projections; rows follow c, columns follow r.

    Returns ``(c_values, r_values, grid)``.
    """
    c_steps, r_steps = (steps, steps) if isinstance(steps, int) else steps
    cs = _axis(*c_range, c_steps)
    rs = _axis(*r_range, r_steps)
    grid = [[speedup_projection(gamma, c, r) for r in rs] for c in cs]
    return cs, rs, grid


def heatmap_csv(gamma, cs, rs, grid) -> str:
    out = io.StringIO()
    out.write(f"# gamma={gamma}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["c", "r", "speedup"])
    for c, row in zip(cs, grid):
        for r, v in zip(rs, row):
            w.writerow([_fmt(c), _fmt(r), _fmt(v)])
    return out.getvalue()


# ---------------------------------------------------------------------------
# API cost


@dataclass(frozen=True)
class PricingRow:
    provider: str
    draft_in: float
    draft_out: float
    target_in: float
    target_out: float
    requests: int = 1_000_000
    in_tokens: int = 100
    out_tokens: int = 500
    gamma: int = 4
    tau: float = 2.5

    def __post_init__(self):
        if min(self.draft_in, self.draft_out, self.target_in, self.target_out) < 0:
            raise DomainError("prices must be >= 0")


PER_TOKEN = 1e-6


def _check_tau(row: PricingRow):
    if row.tau <= 0:
        raise DomainError("tau must be positive")


def cost_cloud_ar(row: PricingRow) -> float:
    return row.requests * (row.in_tokens * row.target_in + row.out_tokens * row.target_out) * PER_TOKEN


def cost_edge_sd(row: PricingRow) -> float:
    """Drafting on the device: only the target is billed, once per round."""
    _check_tau(row)
    target_out = row.out_tokens / row.tau
    return row.requests * (row.in_tokens * row.target_in + target_out * row.target_out) * PER_TOKEN


def cost_cloud_sd(row: PricingRow) -> float:
    """Edge SD plus the billed draft model: prompt once, gamma tokens per round."""
    drafted = row.gamma * row.out_tokens / row.tau
    draft = row.requests * (row.in_tokens * row.draft_in + drafted * row.draft_out) * PER_TOKEN
    return cost_edge_sd(row) + draft


def load_pricing(text: str, gamma: int = 4, tau: float = 2.5, **kw) -> list[PricingRow]:
    """Parse ``provider,draft_in,draft_out,target_in,target_out`` CSV."""
    rows = []
    for rec in csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")):
        rows.append(PricingRow(
            rec["provider"].strip(), float(rec["draft_in"]), float(rec["draft_out"]),
            float(rec["target_in"]), float(rec["target_out"]), gamma=gamma, tau=tau, **kw,
        ))
    return rows


# ---------------------------------------------------------------------------
# Run metrics


@dataclass
class RunMetrics:
    rounds: int = 0
    tokens_emitted: int = 0
    draft_calls: int = 0
    predraft_calls: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    sum_earliest_matching_exit: int = 0
    matched_rounds: int = 0
    stale_drops: int = 0
    predraft_discards: int = 0
    server_discards: int = 0


def metrics_finalize(m: RunMetrics) -> tuple[float, float, float]:
    """(tau, miss rate, average earliest exit matching the final output)."""
    if m.rounds <= 0:
        raise DomainError("no rounds recorded")
    tau = m.tokens_emitted / m.rounds
    miss_rate = m.cache_misses / m.rounds
    avg_ee = m.sum_earliest_matching_exit / m.matched_rounds if m.matched_rounds else math.nan
    return tau, miss_rate, avg_ee


def expected_tau_greedy(alpha: float, gamma: int) -> float:
    """Mean tokens per round when each drafted token agrees i.i.d. w.p. alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    return 1.0 + sum(alpha ** k for k in range(1, gamma + 1))


# ---------------------------------------------------------------------------
# CSV schemas

ROUND_FIELDS = ["round", "delta", "tau_inst", "hit", "earliest_exit", "draft_calls"]
SUMMARY_FIELDS = ["mode", "n", "gamma", "threads", "client_q", "server_q", "seed",
                  "tau", "miss_rate", "avg_ee", "wall_ms"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.6f}".rstrip("0").rstrip(".")
    return str(v)


def write_csv(rows: Iterable[dict], fields: Sequence[str], header_comment: str | None = None) -> str:
    out = io.StringIO()
    if header_comment:
        out.write(f"# {header_comment}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(row.get(f)) for f in fields])
    return out.getvalue()
