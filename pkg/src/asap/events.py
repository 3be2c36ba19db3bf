"""Stream domain types and CSV trace / metrics I/O.

Timestamps are integer microseconds since the stream epoch. Every derived
duration (processing, delivery, building, latency) is reported in seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

US_PER_S = 1_000_000

METRICS_HEADER = ("k", "s_k", "t_k", "tau_k", "pi_k", "lambda_k", "gamma_mean", "drop_count")


class TraceFormatError(ValueError):
    """A trace line could not be parsed."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OrderingError(ValueError):
    """Timestamps went backwards."""

    def __init__(self, index: int, t_prev: int, t: int) -> None:
        super().__init__(f"event {index}: timestamp {t} precedes {t_prev}")
        self.index = index


class Event(NamedTuple):
    """A single pixel change. ``polarity`` is True for positive (ON) events."""

    t: int
    x: int
    y: int
    polarity: bool


@dataclass(frozen=True)
class EventPackage:
    k: int
    events: tuple[Event, ...]
    target_size: int
    flushed: bool = False

    def __post_init__(self) -> None:
        if not self.events:
            raise ValueError("an event package cannot be empty")
        if not self.flushed and len(self.events) < self.target_size:
            raise ValueError(
                f"package {self.k} closed with {len(self.events)} < {self.target_size} events"
            )

    @property
    def t_first(self) -> int:
        return self.events[0].t

    @property
    def t_last(self) -> int:
        return self.events[-1].t

    @property
    def building_time(self) -> float:
        """Span between oldest and newest event, in seconds."""
        return (self.t_last - self.t_first) / US_PER_S

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class PackageMetrics:
    """Per-package timing record. ``lambda_k`` is derived, never stored."""

    k: int
    s_k: int
    t_k: float
    tau_k: float
    pi_k: float
    gamma_mean: float = 1.0
    drop_count: int = 0
    flushed: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("t_k", "tau_k", "pi_k"):
            value = getattr(self, name)
            if not value >= 0 or math.isinf(value):
                raise ValueError(f"{name} must be a finite non-negative time, got {value!r}")

    @property
    def lambda_k(self) -> float:
        return self.tau_k + self.pi_k


def _parse_line(line: str, line_no: int) -> Event:
    fields = line.split(",")
    if len(fields) != 4:
        raise TraceFormatError(line_no, f"expected 4 fields t_us,x,y,p, got {len(fields)}")
    try:
        t, x, y, p = (int(f) for f in fields)
    except ValueError as exc:
        raise TraceFormatError(line_no, f"non-integer field in {line!r}") from exc
    if t < 0 or x < 0 or y < 0:
        raise TraceFormatError(line_no, "negative timestamp or coordinate")
    if p not in (0, 1):
        raise TraceFormatError(line_no, f"polarity must be 0 or 1, got {p}")
    return Event(t, x, y, p == 1)


def read_trace(path: str | Path) -> Iterator[Event]:
    """Lazily yield events from a ``t_us,x,y,p`` CSV trace.

    A single leading header line (first character not a digit) is skipped.
    Blank lines are ignored. Raises :class:`TraceFormatError` on a malformed
    line and :class:`OrderingError` on a timestamp regression.
    """
    with open(path, newline="") as fh:
        t_prev = -1
        index = 0
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line_no == 1 and not line[0].isdigit():
                continue
            event = _parse_line(line, line_no)
            if event.t < t_prev:
                raise OrderingError(index, t_prev, event.t)
            t_prev = event.t
            index += 1
            yield event


def write_trace(events: Iterable[Event], path: str | Path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("t_us,x,y,p\n")
        for e in events:
            fh.write(f"{e.t},{e.x},{e.y},{int(e.polarity)}\n")


def _fmt(value: float) -> str:
    return format(value, ".12g")


def write_metrics(records: Sequence[PackageMetrics], path: str | Path) -> None:
    """Write package metrics as CSV, one row per record in ascending ``k``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for m in sorted(records, key=lambda r: r.k):
            writer.writerow(
                (
                    m.k,
                    m.s_k,
                    _fmt(m.t_k),
                    _fmt(m.tau_k),
                    _fmt(m.pi_k),
                    _fmt(m.lambda_k),
                    _fmt(m.gamma_mean),
                    m.drop_count,
                )
            )


def read_metrics(path: str | Path) -> list[PackageMetrics]:
    """Load a metrics CSV written by :func:`write_metrics`."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                PackageMetrics(
                    k=int(row["k"]),
                    s_k=int(row["s_k"]),
                    t_k=float(row["t_k"]),
                    tau_k=float(row["tau_k"]),
                    pi_k=float(row["pi_k"]),
                    gamma_mean=float(row["gamma_mean"]),
                    drop_count=int(row["drop_count"]),
                )
            )
    return out
