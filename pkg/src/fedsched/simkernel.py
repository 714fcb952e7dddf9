"""Deterministic discrete-event clock."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple


@dataclass(order=True)
class Event:
    t: float
    seq: int
    payload: Any = field(compare=False)
    cancelled: bool = field(default=False, compare=False)


class SimKernel:
    """Priority queue of events dispatched in ``(t, seq)`` order.

    A payload that is callable is invoked on dispatch; anything else is
    only recorded. ``log`` keeps ``(t, seq, payload)`` of dispatched events
    when ``record=True``.
    """

    def __init__(self, start_t: float = 0.0, record: bool = False):
        self.now = float(start_t)
        self._queue: List[Event] = []
        self._seq = itertools.count()
        self.record = record
        self.log: List[Tuple[float, int, Any]] = []

    def schedule(self, t: float, payload: Any) -> Event:
        if t < self.now:
            raise ValueError(f"cannot schedule an event at t={t} before the clock ({self.now})")
        ev = Event(float(t), next(self._seq), payload)
        heapq.heappush(self._queue, ev)
        return ev

    @staticmethod
    def cancel(ev: Event) -> None:
        ev.cancelled = True

    def pending(self) -> int:
        return sum(not ev.cancelled for ev in self._queue)

    def step(self) -> Optional[Event]:
        """Dispatch the next live event; ``None`` when the queue is drained."""
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.t
            if self.record:
                self.log.append((ev.t, ev.seq, ev.payload))
            if callable(ev.payload):
                ev.payload()
            return ev
        return None

    def run_until_idle(self) -> float:
        while self.step() is not None:
            pass
        return self.now
