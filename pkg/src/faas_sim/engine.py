"""Deterministic discrete-event kernel.

Events are ordered by ``(time, seq)`` where ``seq`` is assigned at enqueue,
so simultaneous events dispatch in FIFO order. Cancellation is lazy: the
event is flagged and skipped when it reaches the head of the queue.
"""

from __future__ import annotations

import enum
import heapq
import math
from typing import Callable

from .errors import NoHandlerError, PastEventError


class EventKind(enum.Enum):
    REQUEST_ARRIVAL = "RequestArrival"
    CONTAINER_READY = "ContainerReady"
    REQUEST_COMPLETION = "RequestCompletion"
    IDLE_TIMEOUT = "IdleTimeout"
    SCALING_TICK = "ScalingTick"
    RETRY_SCHEDULING = "RetryScheduling"
    SIMULATION_END = "SimulationEnd"


class SimEvent:
    __slots__ = ("time", "seq", "kind", "payload", "cancelled", "dispatched")

    def __init__(self, time: float, seq: int, kind: EventKind, payload: tuple):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.payload = payload
        self.cancelled = False
        self.dispatched = False

    @property
    def pending(self) -> bool:
        return not (self.cancelled or self.dispatched)

    def __repr__(self):
        return f"SimEvent({self.time!r}, seq={self.seq}, {self.kind.value}, {self.payload})"


Handler = Callable[[SimEvent], None]


class Engine:
    def __init__(self, log_events: bool = False):
        self.now = 0.0
        self._queue: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[EventKind, Handler] = {}
        self._stopped = False
        self.dispatched = 0
        self.log: list[str] | None = [] if log_events else None

    def on(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def schedule(self, time: float, kind: EventKind, *payload) -> SimEvent:
        if time < self.now:
            raise PastEventError(f"event at t={time!r} is before clock t={self.now!r}")
        ev = SimEvent(time, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, (time, ev.seq, ev))
        return ev

    def cancel(self, ev: SimEvent | None) -> bool:
        if ev is None or ev.cancelled or ev.dispatched:
            return False
        ev.cancelled = True
        return True

    def stop(self) -> None:
        """Halt ``run_until`` after the event currently being dispatched."""
        self._stopped = True

    def peek_time(self) -> float:
        while self._queue and self._queue[0][2].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else math.inf

    def __len__(self):
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run_until(self, end: float = math.inf) -> int:
        """Dispatch every pending event with ``time <= end``; return the count."""
        queue = self._queue
        handlers = self._handlers
        log = self.log
        pop = heapq.heappop
        count = 0
        self._stopped = False
        while queue and queue[0][0] <= end:
            time, _, ev = pop(queue)
            if ev.cancelled:
                continue
            handler = handlers.get(ev.kind)
            if handler is None:
                heapq.heappush(queue, (time, ev.seq, ev))
                raise NoHandlerError(f"no handler registered for {ev.kind.value}")
            self.now = time
            ev.dispatched = True
            if log is not None:
                log.append(f"{ev.seq}\t{time!r}\t{ev.kind.value}\t{','.join(map(str, ev.payload))}")
            handler(ev)
            count += 1
            if self._stopped:
                break
        if not self._stopped and end != math.inf and end > self.now:
            self.now = end
        self.dispatched += count
        return count
