"""Out-of-process model adapter speaking newline-delimited JSON on stdio.

Requests and responses, one per line, answered in order::

    {"op": "draft", "prefix": [...], "gamma": k}
        -> {"tokens": [...], "top_prob": [...]}
    {"op": "verify", "prefix": [...], "draft": [...], "exit": i}
        -> {"accepted": d, "next": id, "confidence": f}

Failures answer ``{"error": "..."}``. Only greedy decoding goes through this
interface.
"""

from __future__ import annotations

import json
import subprocess
import threading
from typing import IO, Sequence

from .errors import DomainError, ProtocolError
from .models import TokenSeq


def handle_request(model, req: dict) -> dict:
    op = req.get("op")
    if op == "draft":
        tokens, top = model.draft_greedy(_prefix(model, req), int(req["gamma"]))
        return {"tokens": list(tokens), "top_prob": list(top)}
    if op == "verify":
        draft = [int(t) for t in req["draft"]]
        model.check_tokens(draft)
        delta, out, probs = model.verify_greedy_exit(_prefix(model, req), draft, int(req["exit"]))
        return {"accepted": delta, "next": out[-1], "confidence": max(probs)}
    raise DomainError(f"unknown op {op!r}")


def _prefix(model, req) -> TokenSeq:
    prefix = TokenSeq(int(t) for t in req["prefix"])
    model.check_tokens(prefix)
    return prefix


def serve_adapter(model, instream: IO[str], outstream: IO[str]) -> int:
    """Answer requests until EOF; returns the number handled."""
    handled = 0
    for line in instream:
        if not line.strip():
            continue
        try:
            resp = handle_request(model, json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            resp = {"error": str(exc)}
        outstream.write(json.dumps(resp) + "\n")
        outstream.flush()
        handled += 1
    return handled


class AdapterModel:
    """Model backed by an adapter subprocess (greedy decoding only)."""

    def __init__(self, command: Sequence[str], vocab: int, num_exits: int):
        self.vocab = vocab
        self.num_exits = num_exits
        self._proc = subprocess.Popen(list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, bufsize=1)
        self._lock = threading.Lock()

    def _call(self, req: dict) -> dict:
        with self._lock:
            self._proc.stdin.write(json.dumps(req) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            raise ProtocolError("adapter exited")
        resp = json.loads(line)
        if "error" in resp:
            raise ProtocolError(f"adapter error: {resp['error']}")
        return resp

    def check_tokens(self, tokens) -> None:
        for t in tokens:
            if not 0 <= t < self.vocab:
                raise DomainError(f"token id {t} outside vocabulary of size {self.vocab}")

    def draft_greedy(self, prefix, gamma: int):
        resp = self._call({"op": "draft", "prefix": list(TokenSeq.of(prefix)), "gamma": gamma})
        return list(resp["tokens"]), list(resp["top_prob"])

    def verify_greedy_exit(self, prefix, draft, i: int):
        draft = list(draft)
        resp = self._call({"op": "verify", "prefix": list(TokenSeq.of(prefix)),
                           "draft": draft, "exit": i})
        delta = int(resp["accepted"])
        out = draft[:delta] + [int(resp["next"])]
        return delta, out, [float(resp["confidence"])] * len(out)

    def rollout(self, prefix, n: int):
        seq = TokenSeq.of(prefix)
        tokens, probs = [], []
        for _ in range(n):
            _, out, p = self.verify_greedy_exit(seq, [], self.num_exits)
            tokens.append(out[-1])
            probs.append(p[-1])
            seq = seq.extend(out)
        return tokens, probs

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
