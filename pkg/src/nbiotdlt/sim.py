"""Deterministic discrete-event engine.

Time is an integer number of microseconds. Events are ordered by
``(at, seq)`` where ``seq`` is the insertion counter, so simultaneous
events run in the order they were scheduled.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

US_PER_MS = 1_000
US_PER_S = 1_000_000

DEFAULT_STREAMS = (
    "arrivals",
    "preamble",
    "backoff",
    "sensor-noise",
    "peer-selection",
    "nonce",
)


def ms(value: float) -> int:
    return int(round(value * US_PER_MS))


def seconds(value: float) -> int:
    return int(round(value * US_PER_S))


def to_seconds(t_us: int) -> float:
    return t_us / US_PER_S


class SchedulingError(RuntimeError):
    """An event was scheduled in the past. Always a model bug."""


class UnknownStreamError(KeyError):
    pass


@dataclass(frozen=True, slots=True)
class SimEvent:
    at: int
    seq: int
    target: str
    kind: str
    payload: Any = None

    def sort_key(self) -> tuple[int, int]:
        return (self.at, self.seq)


class TraceRecord:
    """One executed event or metric record; ``detail`` is rendered on demand."""

    __slots__ = ("time_us", "actor", "kind", "_detail", "_payload")

    def __init__(self, time_us: int, actor: str, kind: str, detail: str | None = "",
                 payload: Any = None):
        self.time_us = time_us
        self.actor = actor
        self.kind = kind
        self._detail = detail
        self._payload = payload

    @property
    def detail(self) -> str:
        if self._detail is None:
            self._detail = _describe(self._payload)
            self._payload = None
        return self._detail

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return self.line() == other.line()

    def __repr__(self) -> str:
        return f"TraceRecord({self.line()!r})"

    def line(self) -> str:
        detail = self.detail.replace(",", ";")
        return f"{self.time_us},{self.actor},{self.kind},{detail}"


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def times(self) -> list[int]:
        return [r.time_us for r in self.records]

    def lines(self) -> list[str]:
        return [r.line() for r in self.records]

    def serialize(self) -> bytes:
        return ("\n".join(self.lines()) + "\n").encode() if self.records else b""

    def csv_text(self) -> str:
        return "time_us,actor,kind,detail\n" + "".join(line + "\n" for line in self.lines())

    def export(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def stream_seed(seed: int, name: str) -> int:
    # Independent of PYTHONHASHSEED.
    h = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(h[:8], "big")


Handler = Callable[[SimEvent], None]


class Engine:
    """Virtual clock, event queue and named random streams.

    Actors register a handler under an identifier; events addressed to
    that identifier are passed to the handler in ``(at, seq)`` order.
    Handlers may also emit metric records into the trace with :meth:`log`.
    """

    def __init__(self, seed: int = 0, streams: Iterable[str] = DEFAULT_STREAMS,
                 record_events: bool = True):
        self.seed = seed
        self.now = 0
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self._handlers: dict[str, Handler] = {}
        self._streams = {name: random.Random(stream_seed(seed, name)) for name in streams}
        self.record_events = record_events
        self.trace = RunTrace()
        self._pending_trace: list[TraceRecord] | None = None

    # -- actors -------------------------------------------------------------

    def register(self, actor: str, handler: Handler) -> None:
        if actor in self._handlers:
            raise ValueError(f"actor {actor!r} already registered")
        self._handlers[actor] = handler

    # -- scheduling ---------------------------------------------------------

    def schedule(self, at: int, target: str, kind: str, payload: Any = None) -> SimEvent:
        if at < self.now:
            raise SchedulingError(f"event {kind!r} for {target!r} at {at} < clock {self.now}")
        ev = SimEvent(int(at), self._seq, target, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, (ev.at, ev.seq, ev))
        return ev

    def after(self, delay: int, target: str, kind: str, payload: Any = None) -> SimEvent:
        return self.schedule(self.now + delay, target, kind, payload)

    def __len__(self) -> int:
        return len(self._queue)

    def peek_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def pop(self) -> SimEvent:
        return heapq.heappop(self._queue)[2]

    # -- randomness ---------------------------------------------------------

    def stream(self, name: str) -> random.Random:
        try:
            return self._streams[name]
        except KeyError:
            raise UnknownStreamError(name) from None

    def next_random(self, name: str) -> float:
        return self.stream(name).random()

    # -- trace --------------------------------------------------------------

    def log(self, actor: str, kind: str, detail: str = "", payload: Any = None) -> None:
        rec = TraceRecord(self.now, actor, kind, detail, payload)
        self.trace.records.append(rec)
        if self._pending_trace is not None:
            self._pending_trace.append(rec)

    # -- run loop -----------------------------------------------------------

    def _execute(self, ev: SimEvent) -> None:
        self.now = ev.at
        if self.record_events:
            self.log(ev.target, ev.kind, None, ev.payload)
        handler = self._handlers.get(ev.target)
        if handler is not None:
            handler(ev)

    def run_until(self, t_end: int) -> RunTrace:
        """Execute every event with ``at <= t_end``; the clock ends at ``t_end``."""
        out: list[TraceRecord] = []
        self._pending_trace = out
        try:
            while self._queue and self._queue[0][0] <= t_end:
                self._execute(self.pop())
        finally:
            self._pending_trace = None
        self.now = max(self.now, t_end)
        return RunTrace(out)

    def run(self, max_events: int | None = None) -> RunTrace:
        """Drain the queue. The clock stays at the last executed event."""
        out: list[TraceRecord] = []
        self._pending_trace = out
        n = 0
        try:
            while self._queue:
                if max_events is not None and n >= max_events:
                    break
                self._execute(self.pop())
                n += 1
        finally:
            self._pending_trace = None
        return RunTrace(out)


def _describe(payload: Any) -> str:
    if payload is None:
        return ""
    describe = getattr(payload, "describe", None)
    if describe is not None:
        return describe()
    if isinstance(payload, (str, int, float)):
        return str(payload)
    if isinstance(payload, bytes):
        return payload.hex()
    if isinstance(payload, dict):
        return ";".join(f"{k}={_describe(v)}" for k, v in sorted(payload.items()))
    if isinstance(payload, (tuple, list)):
        return "|".join(_describe(v) for v in payload)
    return type(payload).__name__
