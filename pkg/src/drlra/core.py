"""Shared domain types, the average packet rate and the genie upper bound."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NodeId = int

RNG_ALGORITHM = "PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """Seeded random stream. Same seed gives the same draw sequence."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent streams derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


@dataclass(frozen=True)
class ActivityTrace:
    """Ground-truth activity ``active[k, t]`` of ``K`` nodes over ``T`` slots."""

    active: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.active)
        if a.ndim != 2:
            raise ValueError(f"activity matrix must be 2-D, got shape {a.shape}")
        if a.size and not np.isin(a, (0, 1)).all():
            raise ValueError("activity matrix entries must be 0 or 1")
        a = a.astype(np.uint8)
        a.setflags(write=False)
        object.__setattr__(self, "active", a)

    @property
    def k_nodes(self) -> int:
        return self.active.shape[0]

    @property
    def t_slots(self) -> int:
        return self.active.shape[1]

    def active_set(self, t: int) -> frozenset[NodeId]:
        return frozenset(np.flatnonzero(self.active[:, t]).tolist())

    def counts(self) -> np.ndarray:
        """Per-slot number of active nodes."""
        return self.active.sum(axis=0).astype(np.int64)

    def slice(self, start: int, stop: int) -> "ActivityTrace":
        return ActivityTrace(self.active[:, start:stop])

    def to_csv(self) -> str:
        lines = ["K,T", f"{self.k_nodes},{self.t_slots}"]
        lines += [",".join(map(str, row)) for row in self.active.tolist()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ActivityTrace":
        lines = text.splitlines()
        if len(lines) < 2 or lines[0].replace(" ", "") != "K,T":
            raise ValueError("trace CSV must start with a 'K,T' header")
        k, t = (int(v) for v in lines[1].split(","))
        if k == 0 or t == 0:
            return cls(np.zeros((k, t), dtype=np.uint8))
        body = [ln for ln in lines[2:] if ln.strip()]
        if len(body) != k:
            raise ValueError(f"trace CSV declares K={k} but has {len(body)} node rows")
        active = np.array([[int(v) for v in r.split(",")] for r in body], dtype=np.int64)
        if active.shape != (k, t):
            raise ValueError(f"trace CSV body has shape {active.shape}, expected {(k, t)}")
        return cls(active)


@dataclass(frozen=True)
class SlotAllocation:
    granted: frozenset[NodeId]
    n_rbs: int

    def __post_init__(self):
        if len(self.granted) > self.n_rbs:
            raise ValueError(f"{len(self.granted)} grants exceed {self.n_rbs} RBs")


def _fs(x: Iterable[int]) -> frozenset[int]:
    return x if isinstance(x, frozenset) else frozenset(int(v) for v in x)


@dataclass(frozen=True)
class SlotOutcome:
    """Events of one slot: DRL grants, RA contention and deliveries."""

    slot: int = 0
    drl_granted: frozenset[NodeId] = frozenset()
    drl_delivered: frozenset[NodeId] = frozenset()
    ra_attempted: frozenset[NodeId] = frozenset()
    ra_collided: frozenset[NodeId] = frozenset()
    ra_delivered: frozenset[NodeId] = frozenset()
    wasted_rbs: int = 0

    def __post_init__(self):
        for name in ("drl_granted", "drl_delivered", "ra_attempted", "ra_collided", "ra_delivered"):
            object.__setattr__(self, name, _fs(getattr(self, name)))
        if not self.drl_delivered <= self.drl_granted:
            raise ValueError("drl_delivered must be a subset of drl_granted")
        if not self.ra_delivered <= self.ra_attempted:
            raise ValueError("ra_delivered must be a subset of ra_attempted")
        if self.ra_collided & self.ra_delivered:
            raise ValueError("a collided node cannot be delivered")

    @property
    def ra_detected(self) -> frozenset[NodeId]:
        """Nodes whose sequence was unique, granted or not."""
        return self.ra_attempted - self.ra_collided

    @property
    def delivered(self) -> frozenset[NodeId]:
        return self.drl_delivered | self.ra_delivered

    @property
    def n_delivered(self) -> int:
        return len(self.drl_delivered) + len(self.ra_delivered)


def check_outcome(o: SlotOutcome, active: Iterable[NodeId], n_drl: int, n_ra: int) -> None:
    """Raise ``AssertionError`` if ``o`` breaks a protocol invariant."""
    active = _fs(active)
    assert o.delivered <= active, "delivered a packet from an inactive node"
    assert len(o.drl_granted) <= n_drl, "DRL grants exceed N1"
    assert len(o.ra_delivered) <= n_ra, "RA grants exceed N2"
    assert not (o.drl_granted & o.ra_attempted), "granted node also contended"
    assert o.wasted_rbs == len(o.drl_granted - active), "wasted RB count is off"
    assert o.wasted_rbs + len(o.drl_delivered) <= n_drl


@dataclass(frozen=True)
class RateSeries:
    per_slot: np.ndarray
    mean: float = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.per_slot, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("rate series needs at least one slot")
        p.setflags(write=False)
        object.__setattr__(self, "per_slot", p)
        object.__setattr__(self, "mean", float(p.mean()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("slot,rate\n")
        for t, r in enumerate(self.per_slot):
            buf.write(f"{t},{float(r)!r}\n")
        buf.write(f"mean,{self.mean!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RateSeries":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        return cls(np.array([float(r) for s, r in rows if s != "mean"]))


def average_packet_rate(outcomes: Sequence[SlotOutcome], k_nodes: int) -> RateSeries:
    """Fraction of node-slots whose packet reached the AP.

    Each delivered packet counts once; the per-slot value is the number of
    deliveries divided by ``k_nodes``.
    """
    if len(outcomes) == 0:
        raise ValueError("average_packet_rate needs at least one slot outcome")
    if k_nodes < 1:
        raise ValueError("k_nodes must be >= 1")
    return RateSeries(np.array([o.n_delivered for o in outcomes], dtype=float) / k_nodes)


def genie_rate(trace: ActivityTrace, n_rbs: int) -> RateSeries:
    """Rate of the allocator that knows the activity: ``min(K^a(t), N) / K``."""
    if n_rbs < 0:
        raise ValueError("n_rbs must be >= 0")
    return RateSeries(np.minimum(trace.counts(), n_rbs) / trace.k_nodes)
