"""Thread-safe exit-output queues with priority, FIFO or seeded-random order."""

from __future__ import annotations

import heapq
import threading
from collections import deque

from . import kernels
from .models import QUEUE, tag

STRATEGIES = ("priority", "fifo", "random")


class ExitQueue:
    """Queue of early-exit outputs.

    ``priority`` pops the highest score first (ties: insertion order),
    ``fifo`` pops insertion order, ``random`` pops index
    ``prf(seed, QUEUE, [k]) % len`` on the k-th pop of the queue's lifetime.
    """

    def __init__(self, strategy: str = "priority", seed: int = 0):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown queue strategy {strategy!r}")
        self.strategy = strategy
        self._key = kernels.backend.mix(seed & 0xFFFFFFFFFFFFFFFF)
        self._items: list | deque = [] if strategy != "fifo" else deque()
        self._seq = 0
        self._pops = 0
        self.cond = threading.Condition()
        # held across pop+send and reset+send so sends never interleave with a reset
        self.send_lock = threading.Lock()
        self.discarded = 0

    def push(self, item, score: float) -> None:
        with self.cond:
            if self.strategy == "priority":
                heapq.heappush(self._items, (-score, self._seq, item))
            else:
                self._items.append((score, self._seq, item))
            self._seq += 1
            self.cond.notify_all()

    def pop(self):
        """Next item, or None when empty."""
        with self.cond:
            if not self._items:
                return None
            if self.strategy == "priority":
                return heapq.heappop(self._items)[2]
            if self.strategy == "fifo":
                return self._items.popleft()[2]
            b = kernels.backend
            idx = b.prf(self._key, tag(QUEUE), b.fold(0, (self._pops,))) % len(self._items)
            self._pops += 1
            return self._items.pop(idx)[2]

    def reset(self) -> int:
        """Drop every entry; returns how many were dropped."""
        with self.cond:
            dropped = len(self._items)
            self._items.clear()
            return dropped

    def wait(self, predicate, timeout=None) -> bool:
        with self.cond:
            return self.cond.wait_for(predicate, timeout)

    def __len__(self):
        return len(self._items)


class ClientQueue(ExitQueue):
    pass


class ServerQueue(ExitQueue):
    def __init__(self, strategy: str = "priority", seed: int = 0):
        if strategy == "random":
            raise ValueError("server queue supports priority or fifo only")
        super().__init__(strategy, seed)


def queue_pop(queue: ExitQueue):
    return queue.pop()
