"""Conventional grant-based random access.

Every active node picks one of ``M`` orthonormal sequences uniformly at
random. A node is detected iff nobody else picked its sequence, and at most
``N`` detected nodes receive a resource block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core import NodeId, RateSeries, SlotOutcome

DEFAULT_M = 54
MODES = ("verbatim", "simulation-consistent", "capped-mean")


@dataclass(frozen=True)
class RaConfig:
    m_sequences: int = DEFAULT_M
    n_rbs: int = 10

    def __post_init__(self):
        if self.m_sequences < 1:
            raise ValueError("m_sequences must be >= 1")
        if self.n_rbs < 0:
            raise ValueError("n_rbs must be >= 0")


def _singletons(draws: np.ndarray, m: int) -> np.ndarray:
    """Per-row mask of draws that no other entry in the row repeats."""
    rows, n = draws.shape
    flat = draws + (np.arange(rows) * m)[:, None]
    counts = np.bincount(flat.ravel(), minlength=rows * m)
    return counts[flat] == 1


def simulate_ra_contention(
    active: Iterable[NodeId], cfg: RaConfig, rng: np.random.Generator, slot: int = 0
) -> SlotOutcome:
    nodes = np.array(sorted(active), dtype=np.int64)
    if nodes.size == 0:
        return SlotOutcome(slot=slot)
    draws = rng.integers(0, cfg.m_sequences, size=(1, nodes.size))
    unique = _singletons(draws, cfg.m_sequences)[0]
    detected = nodes[unique]
    if detected.size > cfg.n_rbs:
        detected = rng.choice(detected, size=cfg.n_rbs, replace=False)
    return SlotOutcome(
        slot=slot,
        ra_attempted=frozenset(nodes.tolist()),
        ra_collided=frozenset(nodes[~unique].tolist()),
        ra_delivered=frozenset(detected.tolist()),
    )


def simulate_ra_deliveries(n_active, cfg: RaConfig, rng: np.random.Generator) -> np.ndarray:
    """Vectorised delivered-packet counts, one per entry of ``n_active``.

    Same contention rule as :func:`simulate_ra_contention`, without node
    identities. Slots are grouped by their active count.
    """
    n_active = np.asarray(n_active, dtype=np.int64)
    out = np.zeros(n_active.shape, dtype=np.int64)
    for ka in np.unique(n_active):
        if ka <= 0:
            continue
        idx = np.flatnonzero(n_active == ka)
        for chunk in np.array_split(idx, max(1, idx.size * int(ka) // 2_000_000 + 1)):
            draws = rng.integers(0, cfg.m_sequences, size=(chunk.size, int(ka)))
            detected = _singletons(draws, cfg.m_sequences).sum(axis=1)
            out[chunk] = np.minimum(detected, cfg.n_rbs)
    return out


def collision_free_prob(n_active: int, m_sequences: int) -> float:
    """Probability a given node's sequence is unique among ``n_active`` contenders."""
    if m_sequences <= 0:
        raise ValueError("m_sequences must be >= 1")
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    return (1.0 - 1.0 / m_sequences) ** (n_active - 1)


@lru_cache(maxsize=4096)
def singleton_pmf(n_active: int, m_sequences: int) -> np.ndarray:
    """Exact distribution of the number of detected nodes.

    Balls-into-bins recursion over the contenders; the state is the number
    of bins holding exactly one ball and the number holding two or more.
    Returns ``p`` with ``p[d] = P(d nodes picked a unique sequence)``.
    """
    n, m = n_active, m_sequences
    # prob[s, c]: s singleton bins, c multi bins
    prob = np.zeros((n + 2, n + 2))
    prob[0, 0] = 1.0
    s = np.arange(n + 2)[:, None]
    c = np.arange(n + 2)[None, :]
    for _ in range(n):
        empty = np.clip(m - s - c, 0, None) / m
        nxt = prob * (c / m)
        nxt[1:, :] += (prob * empty)[:-1, :]
        nxt[:-1, 1:] += (prob * (s / m))[1:, :-1]
        prob = nxt
    pmf = prob.sum(axis=1)[: n + 1]
    pmf.setflags(write=False)
    return pmf


def expected_ra_deliveries(n_active: int, m_sequences: int, n_rbs: int) -> float:
    """``E[min(D, N)]`` where ``D`` counts nodes with a unique sequence."""
    if n_active <= 0 or n_rbs <= 0:
        return 0.0
    pmf = singleton_pmf(int(n_active), int(m_sequences))
    return float(pmf @ np.minimum(np.arange(pmf.size), n_rbs))


def ra_slot_term(n_active: float, m: int, n_rbs: int, mode: str) -> float:
    """Per-slot numerator of the RA rate before division by ``K``."""
    if n_active <= 0:
        return 0.0
    p = (1.0 - 1.0 / m) ** (n_active - 1)
    if mode == "verbatim":
        if p == 0.0:
            return 0.0
        return min(p, n_rbs / (n_active * p))
    if mode == "capped-mean":
        return min(n_active * p, float(n_rbs))
    if mode == "simulation-consistent":
        return expected_ra_deliveries(int(round(n_active)), m, n_rbs)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def analytic_ra_rate(
    active_counts: Sequence[int], cfg: RaConfig, k_nodes: int, mode: str = "simulation-consistent"
) -> RateSeries:
    """Closed-form RA rate over a sequence of per-slot active counts.

    ``verbatim`` evaluates the textbook per-slot term
    ``min{p, N / (K^a p)}`` with ``p = (1 - 1/M)^(K^a - 1)``.
    ``simulation-consistent`` uses the exact expected number of granted
    detections, which is what a simulation of the protocol converges to.
    ``capped-mean`` is the cruder ``min{K^a p, N}``. Empty slots give 0.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    counts = np.asarray(active_counts)
    if (counts < 0).any():
        raise ValueError("active counts must be nonnegative")
    uniq, inv = np.unique(counts, return_inverse=True)
    vals = np.array([ra_slot_term(float(ka), cfg.m_sequences, cfg.n_rbs, mode) for ka in uniq])
    return RateSeries(vals[inv.ravel()] / k_nodes)
