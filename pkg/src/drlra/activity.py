"""Activity sources: the periodic-random pattern, a coupled regular/alarm
Markov model, and real arrival logs binned into slots."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ActivityTrace


@dataclass(frozen=True)
class SyntheticParams:
    delta: float
    k_nodes: int
    t_slots: int

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.k_nodes < 1 or self.t_slots < 0:
            raise ValueError("k_nodes must be >= 1 and t_slots >= 0")


@dataclass(frozen=True)
class CmmppParams:
    """Per-node regular/alarm modulation plus a cell-wide alarm driver.

    ``coupling`` is the per-slot probability that the shared driver fires and
    pushes every node into the alarm state for that slot.
    """

    p_regular: float = 0.1
    p_alarm: float = 0.9
    p_regular_to_alarm: float = 0.01
    p_alarm_to_regular: float = 0.2
    coupling: float = 0.05

    def __post_init__(self):
        for name, v in vars(self).items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def gen_synthetic(params: SyntheticParams, rng: np.random.Generator) -> ActivityTrace:
    """Nodes are active w.p. ``1 - delta/2`` in even slots and ``delta/2`` in odd ones."""
    t = np.arange(params.t_slots)
    p = np.where(t % 2 == 0, 1.0 - params.delta / 2.0, params.delta / 2.0)
    u = rng.random((params.k_nodes, params.t_slots))
    return ActivityTrace(u < p[None, :])


def gen_cmmpp(params: CmmppParams, k_nodes: int, t_slots: int, rng: np.random.Generator) -> ActivityTrace:
    alarm = np.zeros(k_nodes, dtype=bool)  # every node starts in the regular state
    active = np.zeros((k_nodes, t_slots), dtype=np.uint8)
    for t in range(t_slots):
        driver = rng.random() < params.coupling
        effective = alarm | driver
        p = np.where(effective, params.p_alarm, params.p_regular)
        active[:, t] = rng.random(k_nodes) < p
        u = rng.random(k_nodes)
        alarm = np.where(alarm, u >= params.p_alarm_to_regular, u < params.p_regular_to_alarm)
    return ActivityTrace(active)


@dataclass(frozen=True)
class ArrivalLog:
    """Data arrivals as ``(node_label, seconds)`` records."""

    records: tuple[tuple[str, float], ...]

    def __post_init__(self):
        for i, (label, ts) in enumerate(self.records):
            if not label:
                raise ValueError(f"record {i}: empty node label")
            if not math.isfinite(ts) or ts < 0:
                raise ValueError(f"record {i}: bad timestamp {ts!r}")

    @classmethod
    def from_csv(cls, text: str) -> "ArrivalLog":
        """Parse ``node_label,timestamp_seconds`` with a one-line header.

        Any malformed line rejects the whole log; the error names the line.
        """
        lines = text.splitlines()
        if not lines:
            raise ValueError("line 1: missing header")
        records = []
        for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"line {lineno}: expected 2 fields, got {len(row)}")
            label = row[0].strip()
            try:
                ts = float(row[1])
            except ValueError:
                raise ValueError(f"line {lineno}: timestamp {row[1]!r} is not a number") from None
            if not label:
                raise ValueError(f"line {lineno}: empty node label")
            if not math.isfinite(ts) or ts < 0:
                raise ValueError(f"line {lineno}: timestamp must be finite and nonnegative")
            records.append((label, ts))
        return cls(tuple(records))

    @classmethod
    def read(cls, path) -> "ArrivalLog":
        return cls.from_csv(Path(path).read_text())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_label", "timestamp_seconds"])
        for label, ts in self.records:
            w.writerow([label, repr(float(ts))])
        return buf.getvalue()


def ingest_trace(log: ArrivalLog, slot_duration_s: float, window: tuple[float, float]) -> ActivityTrace:
    """Bin arrivals into half-open slots ``[start + t*d, start + (t+1)*d)``.

    Node ids follow first appearance in time among arrivals inside the
    window (log order breaks ties), so the result does not depend on how
    the log is sorted. Several arrivals in one slot count as one.
    """
    start, end = window
    if slot_duration_s <= 0:
        raise ValueError("slot_duration_s must be positive")
    if not end > start:
        raise ValueError(f"empty window [{start}, {end})")
    t_slots = math.ceil((end - start) / slot_duration_s)
    first: dict[str, tuple[float, int]] = {}
    hits = []
    for i, (label, ts) in enumerate(log.records):
        if not start <= ts < end:
            continue
        if label not in first or ts < first[label][0]:
            first[label] = (ts, first.get(label, (ts, i))[1])
        hits.append((label, min(int((ts - start) // slot_duration_s), t_slots - 1)))
    if not hits:
        raise ValueError(f"no arrivals inside window [{start}, {end})")
    ids = {label: k for k, label in enumerate(sorted(first, key=first.get))}
    active = np.zeros((len(ids), t_slots), dtype=np.uint8)
    kk, tt = zip(*((ids[label], t) for label, t in hits))
    active[list(kk), list(tt)] = 1
    return ActivityTrace(active)


def trace_to_log(trace: ActivityTrace, slot_duration_s: float = 1.0) -> ArrivalLog:
    """One arrival at the start of each active slot, labels ``n0, n1, ...``.

    Nodes that never fire are dropped, since a log cannot express them.
    """
    rec = []
    first = {}
    for k, t in zip(*np.nonzero(trace.active)):
        first.setdefault(int(k), int(t))
    order = sorted(first, key=lambda k: (first[k], k))
    rank = {k: i for i, k in enumerate(order)}
    for t in range(trace.t_slots):
        for k in sorted(np.flatnonzero(trace.active[:, t]).tolist(), key=rank.get):
            rec.append((f"n{k}", t * slot_duration_s))
    return ArrivalLog(tuple(rec))


def periodic_log(periods, duration_s: float, rng: np.random.Generator, jitter_s: float = 0.0) -> ArrivalLog:
    """Arrival log of nodes reporting every ``periods[i]`` seconds from a random phase."""
    rec = []
    for i, period in enumerate(periods):
        phase = rng.uniform(0, period)
        ts = np.arange(phase, duration_s, period)
        if jitter_s:
            ts = np.clip(ts + rng.uniform(-jitter_s, jitter_s, ts.size), 0, np.nextafter(duration_s, 0))
        rec.extend((f"node{i:03d}", float(x)) for x in ts)
    rec.sort(key=lambda r: r[1])
    return ArrivalLog(tuple(rec))


def active_count(trace: ActivityTrace, t: int) -> int:
    if not 0 <= t < trace.t_slots:
        raise IndexError(f"slot {t} out of range [0, {trace.t_slots})")
    return int(trace.active[:, t].sum())
