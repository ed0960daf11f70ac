"""Execution traces: append-only event log shared by machine and scheduler.

Events carry a per-worker sequence number that increases strictly, so
per-worker order is always recoverable from a merged dump. The text form
is one line per event: ``event <worker> <seq> <kind> <payload...>``.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TraceEvent:
    worker: int
    seq: int
    kind: str
    payload: tuple

    def line(self) -> str:
        parts = " ".join(str(p) for p in self.payload)
        return f"event {self.worker} {self.seq} {self.kind} {parts}".rstrip()


class Trace:
    def __init__(self, workers: int = 1):
        self.events: list[TraceEvent] = []
        self._seq = [0] * workers

    def emit(self, worker: int, kind: str, *payload) -> None:
        self._seq[worker] += 1
        self.events.append(TraceEvent(worker, self._seq[worker], kind,
                                      payload))

    def dump_text(self) -> str:
        return "\n".join(ev.line() for ev in self.events) + "\n"

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [ev for ev in self.events if ev.kind == kind]
