"""DRL-aided random access.

Each slot the agent predicts the active set. Up to ``N1`` predicted nodes are
granted a resource block directly. Every active node left without a grant
falls back to contention for the remaining ``N2 = N - N1`` blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .agent import EnsembleAgent
from .core import ActivityTrace, RateSeries, SlotOutcome
from .ra import DEFAULT_M, MODES, RaConfig, expected_ra_deliveries, ra_slot_term, simulate_ra_contention


@dataclass(frozen=True)
class HybridConfig:
    n_total: int = 10
    n_drl: int = 5
    m_sequences: int = DEFAULT_M
    t_h: int = 4
    observe_ground_truth: bool = False

    def __post_init__(self):
        if not 0 <= self.n_drl <= self.n_total:
            raise ValueError(f"need 0 <= n_drl <= n_total, got {self.n_drl}, {self.n_total}")
        if self.m_sequences < 1:
            raise ValueError("m_sequences must be >= 1")

    @property
    def n_ra(self) -> int:
        return self.n_total - self.n_drl

    def with_n1(self, n_drl: int) -> "HybridConfig":
        return HybridConfig(self.n_total, n_drl, self.m_sequences, self.t_h, self.observe_ground_truth)


@dataclass(frozen=True)
class EpsilonStats:
    """Prediction counts of one slot.

    ``k_active`` counts nodes *predicted* active, of which ``k_cor_active``
    really were and ``k_mis_active`` were not; ``k_mis_inactive`` counts
    active nodes the agent missed.
    """

    k_active: float
    k_cor_active: float
    k_mis_active: float
    k_mis_inactive: float

    def __post_init__(self):
        if min(self.k_active, self.k_cor_active, self.k_mis_active, self.k_mis_inactive) < 0:
            raise ValueError("counts must be nonnegative")
        if abs(self.k_cor_active + self.k_mis_active - self.k_active) > 1e-9:
            raise ValueError("k_cor_active + k_mis_active must equal k_active")

    @classmethod
    def from_counts(cls, k_cor: float, k_mis: float, k_mis_inactive: float) -> "EpsilonStats":
        return cls(k_cor + k_mis, k_cor, k_mis, k_mis_inactive)


STATS_HEADER = "slot,k_active,k_cor_active,k_mis_active,k_mis_inactive"


def stats_to_csv(stats: Sequence[EpsilonStats]) -> str:
    rows = [STATS_HEADER]
    rows += [f"{t},{s.k_active:g},{s.k_cor_active:g},{s.k_mis_active:g},{s.k_mis_inactive:g}"
             for t, s in enumerate(stats)]
    return "\n".join(rows) + "\n"


def stats_from_csv(text: str) -> list[EpsilonStats]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != STATS_HEADER:
        raise ValueError(f"stats CSV must start with header {STATS_HEADER!r}")
    out = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields")
        out.append(EpsilonStats(*(float(v) for v in parts[1:])))
    return out


SLOT_HEADER = "slot,drl_granted,drl_delivered,wasted,ra_attempted,ra_collided,ra_delivered,reward"


def slots_to_csv(outcomes: Sequence[SlotOutcome], rewards: np.ndarray) -> str:
    """Per-slot event counts; ``reward`` is the slot's summed group reward."""
    rows = [SLOT_HEADER]
    for o, r in zip(outcomes, np.asarray(rewards).reshape(len(outcomes), -1).sum(axis=1)):
        rows.append(f"{o.slot},{len(o.drl_granted)},{len(o.drl_delivered)},{o.wasted_rbs},"
                    f"{len(o.ra_attempted)},{len(o.ra_collided)},{len(o.ra_delivered)},{r:g}")
    return "\n".join(rows) + "\n"


def slots_from_csv(text: str) -> list[tuple]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != SLOT_HEADER:
        raise ValueError(f"slot CSV must start with header {SLOT_HEADER!r}")
    out = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 8:
            raise ValueError(f"line {lineno}: expected 8 fields")
        out.append(tuple(int(v) for v in parts[:7]) + (float(parts[7]),))
    return out


@dataclass
class HybridSlotResult:
    outcome: SlotOutcome
    rewards: np.ndarray  # per group
    history: np.ndarray  # observed (K, t_h) window after this slot
    predicted: np.ndarray  # boolean per node
    observed: np.ndarray  # boolean per node
    state: np.ndarray  # encoded input the agent acted on
    actions: np.ndarray

    @property
    def reward(self) -> float:
        return float(self.rewards.sum())


def allocate_slot(predicted: np.ndarray, active: np.ndarray, cfg: HybridConfig,
                  rng: np.random.Generator, slot: int = 0) -> tuple[SlotOutcome, np.ndarray]:
    """Grant RBs to predicted nodes, run the RA fallback, report what the AP saw.

    ``predicted`` and ``active`` are boolean node vectors. Returns the slot
    outcome and the boolean vector of nodes the AP observed as active.
    """
    pred_idx = np.flatnonzero(predicted)
    if pred_idx.size > cfg.n_drl:
        pred_idx = np.sort(rng.choice(pred_idx, size=cfg.n_drl, replace=False))
    granted = np.zeros_like(active, dtype=bool)
    granted[pred_idx] = True
    delivered = granted & active
    fallback = np.flatnonzero(active & ~granted)
    ra = simulate_ra_contention(fallback.tolist(), RaConfig(cfg.m_sequences, cfg.n_ra), rng, slot)
    outcome = SlotOutcome(
        slot=slot,
        drl_granted=frozenset(pred_idx.tolist()),
        drl_delivered=frozenset(np.flatnonzero(delivered).tolist()),
        ra_attempted=ra.ra_attempted,
        ra_collided=ra.ra_collided,
        ra_delivered=ra.ra_delivered,
        wasted_rbs=int((granted & ~active).sum()),
    )
    observed = delivered.copy()
    observed[list(ra.ra_detected)] = True
    return outcome, observed


def run_slot(agent: EnsembleAgent, history: np.ndarray, active, cfg: HybridConfig,
             rng: np.random.Generator, slot: int = 0, eps: float | None = None) -> HybridSlotResult:
    """Play one slot of the hybrid protocol.

    ``history`` is the AP's observed activity over the last ``t_h`` slots,
    shape ``(K, t_h)`` with column 0 the oldest. The returned window has
    shifted by one slot. Rewards are scored against what the AP observed,
    or against ground truth when ``cfg.observe_ground_truth`` is set.
    """
    active = _as_mask(active, agent.k_nodes)
    x, actions, predicted = agent.predict(history, rng, eps)
    outcome, observed = allocate_slot(predicted, active, cfg, rng, slot)
    seen = active if cfg.observe_ground_truth else observed
    rewards = agent.group_rewards(predicted, seen)
    new_history = np.empty_like(history)
    new_history[:, :-1] = history[:, 1:]
    new_history[:, -1] = seen
    return HybridSlotResult(outcome, rewards, new_history, predicted, seen, x, actions)


def _as_mask(active, k_nodes: int) -> np.ndarray:
    a = np.asarray(active)
    if a.dtype == bool and a.shape == (k_nodes,):
        return a
    mask = np.zeros(k_nodes, dtype=bool)
    mask[list(active)] = True
    return mask


@dataclass
class HybridRun:
    outcomes: list[SlotOutcome]
    rewards: np.ndarray  # (T, groups)
    losses: list[float]
    history: np.ndarray

    def rate(self, k_nodes: int) -> RateSeries:
        return RateSeries(np.array([o.n_delivered for o in self.outcomes], float) / k_nodes)


def run_hybrid(agent: EnsembleAgent, trace: ActivityTrace, cfg: HybridConfig, rng: np.random.Generator,
               learn: bool = True, history: np.ndarray | None = None, eps: float | None = None) -> HybridRun:
    """Drive the protocol over a whole trace, training the agent if ``learn``.

    With ``learn=False`` the agent acts greedily unless ``eps`` is given.
    """
    K = trace.k_nodes
    if history is None:
        history = np.zeros((K, agent.cfg.t_h))
    if not learn and eps is None:
        eps = 0.0
    outcomes, rewards, losses = [], np.zeros((trace.t_slots, agent.n_members)), []
    act = trace.active.astype(bool)
    for t in range(trace.t_slots):
        res = run_slot(agent, history, act[:, t], cfg, rng, slot=t, eps=eps)
        history = res.history
        outcomes.append(res.outcome)
        rewards[t] = res.rewards
        if learn:
            agent.remember(res.state, res.actions, res.rewards, agent.encode(history))
            loss = agent.learn(rng)
            if loss is not None:
                losses.append(loss)
            agent.decay_epsilon()
    return HybridRun(outcomes, rewards, losses, history)


def estimate_eps_stats(agent: EnsembleAgent, trace: ActivityTrace, cfg: HybridConfig,
                       rng: np.random.Generator, history: np.ndarray | None = None) -> list[EpsilonStats]:
    """Replay ``trace`` greedily without learning and count prediction errors."""
    K = trace.k_nodes
    history = np.zeros((K, agent.cfg.t_h)) if history is None else history
    act = trace.active.astype(bool)
    stats = []
    for t in range(trace.t_slots):
        res = run_slot(agent, history, act[:, t], cfg, rng, slot=t, eps=0.0)
        history = res.history
        p, a = res.predicted, act[:, t]
        stats.append(EpsilonStats.from_counts(int((p & a).sum()), int((p & ~a).sum()), int((a & ~p).sum())))
    return stats


# analytic rate ---------------------------------------------------------------

def binom(x: int, y: int) -> int:
    """Exact binomial coefficient; 0 outside ``0 <= y <= x``."""
    x, y = int(x), int(y)
    if y < 0 or y > x or x < 0:
        return 0
    y = min(y, x - y)
    acc = 1
    for i in range(1, y + 1):
        acc = acc * (x - y + i) // i
    return acc


def _lbinom(x: int, y: int) -> float:
    return math.lgamma(x + 1) - math.lgamma(y + 1) - math.lgamma(x - y + 1)


def _split_prob(k_cor: int, k_mis: int, n_drl: int, j: int) -> float:
    """P(exactly ``j`` correctly predicted nodes win one of ``n_drl`` grants)."""
    n = k_cor + k_mis
    if not (0 <= j <= k_cor and 0 <= n_drl - j <= k_mis):
        return 0.0
    if n > 500:
        return math.exp(_lbinom(k_cor, j) + _lbinom(k_mis, n_drl - j) - _lbinom(n, n_drl))
    return binom(k_cor, j) * binom(k_mis, n_drl - j) / binom(n, n_drl)


def _count(v: float) -> int:
    return max(0, int(math.floor(v + 0.5)))


def grant_split(k_cor: float, k_mis: float, n_drl: int) -> list[tuple[int, float]]:
    """Distribution of correctly predicted nodes left without a DRL grant.

    Returns ``[(leftover, probability), ...]``. The terms run from the
    smallest feasible number ``n2`` of correct nodes granted (leftover
    ``n1 = k_cor - n2``) up to the largest ``m2`` (leftover ``m1``).
    """
    kc, km, n_drl = _count(k_cor), _count(k_mis), int(n_drl)
    if n_drl >= kc + km:
        return [(0, 1.0)]
    if km >= n_drl:
        n1, n2 = kc, 0
    else:
        n2 = n_drl - km
        n1 = kc - n2
    if kc > n_drl:
        m1, m2 = kc - n_drl, n_drl
    else:
        m1, m2 = 0, kc
    terms = [(n1 - i, _split_prob(kc, km, n_drl, n2 + i)) for i in range(m2 - n2 + 1)]
    assert terms[-1][0] == m1
    return terms


def noRB_expected(k_cor: float, k_mis: float, n_drl: int) -> float:
    """Expected number of correctly predicted active nodes that get no DRL grant."""
    return float(sum(left * p for left, p in grant_split(k_cor, k_mis, n_drl)))


def hybrid_slot_terms(s: EpsilonStats, cfg: HybridConfig, mode: str) -> tuple[float, float]:
    """``(drl_term, ra_term)`` numerators for one slot."""
    split = grant_split(s.k_cor_active, s.k_mis_active, cfg.n_drl)
    no_rb = sum(left * p for left, p in split)
    if mode == "simulation-consistent":
        kc = _count(s.k_cor_active)
        kmi = _count(s.k_mis_inactive)
        drl = kc - no_rb
        ra = sum(p * expected_ra_deliveries(kmi + left, cfg.m_sequences, cfg.n_ra) for left, p in split if p)
        return drl, ra
    v = s.k_mis_inactive + no_rb
    return 0.0, ra_slot_term(v, cfg.m_sequences, cfg.n_ra, mode)


def analytic_hybrid_rate(stats: Sequence[EpsilonStats], cfg: HybridConfig, k_nodes: int,
                         mode: str = "simulation-consistent") -> RateSeries:
    """Closed-form rate of the hybrid scheme from per-slot prediction counts.

    The RA stage is the RA formula with ``N2`` blocks and ``V^a(t)`` =
    missed nodes plus correctly predicted nodes that lost the grant lottery.
    ``verbatim`` is that term alone at ``V^a = k_mis_inactive + noRB``.
    ``simulation-consistent`` adds the expected DRL deliveries and averages
    the exact RA expectation over the lottery outcome.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    cache: dict[tuple, float] = {}
    per_slot = np.empty(len(stats))
    for t, s in enumerate(stats):
        key = (s.k_cor_active, s.k_mis_active, s.k_mis_inactive)
        if key not in cache:
            cache[key] = sum(hybrid_slot_terms(s, cfg, mode))
        per_slot[t] = cache[key]
    return RateSeries(per_slot / k_nodes)


def select_n1(stats: Sequence[EpsilonStats], n_total: int, m_sequences: int, k_nodes: int) -> int:
    """``N1`` in ``0..N`` maximising the simulation-consistent hybrid rate.

    Ties go to the smaller ``N1``.
    """
    best, best_rate = 0, -math.inf
    for n1 in range(n_total + 1):
        cfg = HybridConfig(n_total, n1, m_sequences)
        r = analytic_hybrid_rate(stats, cfg, k_nodes).mean
        if r > best_rate + 1e-12:
            best, best_rate = n1, r
    return best
