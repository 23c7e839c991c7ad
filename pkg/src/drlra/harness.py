"""Experiment orchestration: train, pick N1, evaluate, write CSVs."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .activity import (ArrivalLog, SyntheticParams, gen_cmmpp, gen_synthetic, ingest_trace,
                       periodic_log)
from .agent import EnsembleAgent, EpsilonSchedule
from .config import ExperimentConfig, TrafficSpec, TransferSpec
from .core import ActivityTrace, SlotOutcome, average_packet_rate, check_outcome, genie_rate
from .hybrid import HybridConfig, estimate_eps_stats, run_hybrid, run_slot, select_n1
from .ra import RaConfig, simulate_ra_contention

log = logging.getLogger(__name__)


def seed_streams(seed: int, point: int, n: int = 4) -> list[np.random.Generator]:
    """Independent streams for (seed, grid point): trace, agent init, protocol, RA."""
    ss = np.random.SeedSequence(seed, spawn_key=(point,))
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n)]


def make_trace(spec: TrafficSpec, k_nodes: int, t_slots: int, rng: np.random.Generator) -> ActivityTrace:
    if spec.kind == "synthetic":
        return gen_synthetic(SyntheticParams(spec.delta, k_nodes, t_slots), rng)
    if spec.kind == "cmmpp":
        return gen_cmmpp(spec.cmmpp, k_nodes, t_slots, rng)
    if spec.kind == "periodic":
        periods = [spec.periods[i % len(spec.periods)] for i in range(k_nodes)]
        duration = t_slots * spec.slot_duration_s
        alog = periodic_log(periods, duration, rng, spec.jitter_s)
        trace = ingest_trace(alog, spec.slot_duration_s, (0.0, duration))
        if trace.k_nodes < k_nodes:  # nodes silent over the whole window
            pad = np.zeros((k_nodes - trace.k_nodes, trace.t_slots), dtype=np.uint8)
            trace = ActivityTrace(np.vstack([trace.active, pad]))
        return trace
    if spec.kind == "log":
        try:
            alog = ArrivalLog.read(spec.path)
        except OSError as exc:
            raise ValueError(f"cannot read arrival log {spec.path}: {exc.strerror}") from None
        start = spec.window_start_s
        return ingest_trace(alog, spec.slot_duration_s, (start, start + t_slots * spec.slot_duration_s))
    raise ValueError(f"unknown traffic kind {spec.kind!r}")


@dataclass
class SeedResult:
    seed: int
    status: str
    n1: int
    ra_rate: float
    hybrid_rate: float
    genie_rate: float
    ra_per_slot: np.ndarray | None = None
    hybrid_per_slot: np.ndarray | None = None
    genie_per_slot: np.ndarray | None = None


def evaluate_ra(trace: ActivityTrace, n_rbs: int, m: int, rng: np.random.Generator) -> list[SlotOutcome]:
    cfg = RaConfig(m, n_rbs)
    return [simulate_ra_contention(trace.active_set(t), cfg, rng, slot=t) for t in range(trace.t_slots)]


def check_run(trace: ActivityTrace, outcomes: Sequence[SlotOutcome], n_drl: int, n_ra: int) -> None:
    """Per-slot RB conservation and delivery sanity; raises ``AssertionError``."""
    for t, o in enumerate(outcomes):
        check_outcome(o, trace.active_set(t), n_drl, n_ra)


def run_seed(cfg: ExperimentConfig, seed: int, point: int, traffic: TrafficSpec | None = None,
             k_nodes: int | None = None, n_drl: int | str | None = None) -> SeedResult:
    """Full pipeline for one seed at one grid point."""
    traffic = traffic or cfg.traffic
    K = k_nodes or cfg.k_nodes
    n_drl = cfg.n_drl if n_drl is None else n_drl
    N, M = cfg.n_total, cfg.m_sequences
    r_trace, r_init, r_proto, r_ra = seed_streams(seed, point)
    trace = make_trace(traffic, K, cfg.t_slots, r_trace)
    K = trace.k_nodes
    split = int(round(cfg.train_fraction * trace.t_slots))
    train, held_out = trace.slice(0, split), trace.slice(split, trace.t_slots)

    n1_train = cfg.n1_train if cfg.n1_train is not None else (N // 2 if n_drl == "auto" else int(n_drl))
    hcfg = HybridConfig(N, n1_train, M, cfg.agent.t_h)
    agent = EnsembleAgent(K, cfg.agent, r_init)
    try:
        run = run_hybrid(agent, train, hcfg, r_proto, learn=True)
    except FloatingPointError as exc:
        log.warning("seed %d point %d: training diverged: %s", seed, point, exc)
        nan = float("nan")
        return SeedResult(seed, f"failed: {exc}", -1, nan, nan, nan)
    check_run(train, run.outcomes, hcfg.n_drl, hcfg.n_ra)
    agent.freeze()

    if n_drl == "auto":
        stats = estimate_eps_stats(agent, train, hcfg, r_proto)
        n1 = select_n1(stats, N, M, K)
    else:
        n1 = int(n_drl)
    ecfg = hcfg.with_n1(n1)
    ev = run_hybrid(agent, held_out, ecfg, r_proto, learn=False, history=run.history)
    check_run(held_out, ev.outcomes, ecfg.n_drl, ecfg.n_ra)
    ra_out = evaluate_ra(held_out, N, M, r_ra)
    check_run(held_out, ra_out, 0, N)

    hyb = average_packet_rate(ev.outcomes, K)
    ra = average_packet_rate(ra_out, K)
    gen = genie_rate(held_out, N)
    return SeedResult(seed, "ok", n1, ra.mean, hyb.mean, gen.mean,
                      ra.per_slot, hyb.per_slot, gen.per_slot)


# aggregation / CSV -----------------------------------------------------------

PER_SEED_COLS = ["ra_rate", "hybrid_rate", "genie_rate", "n1", "status"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def aggregate(per_seed: list[dict[str, str]], keys: Sequence[str]) -> list[list]:
    """Mean and sample std of the rate columns per grid point.

    ``per_seed`` rows are dicts as read back from the per-seed CSV, so
    aggregation from memory and from disk is the same computation. The
    ``n1`` column reports the most frequent choice (smallest on ties).
    """
    groups: dict[tuple, list[dict[str, str]]] = {}
    for row in per_seed:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key, rows in groups.items():
        ok = [r for r in rows if r["status"] == "ok"]
        vals = {}
        for col in ("ra_rate", "hybrid_rate", "genie_rate"):
            x = np.array([float(r[col]) for r in ok])
            vals[col] = (float(x.mean()) if x.size else math.nan,
                         float(x.std(ddof=1)) if x.size > 1 else 0.0)
        n1s = Counter(int(r["n1"]) for r in ok)
        n1 = min(n1s, key=lambda v: (-n1s[v], v)) if n1s else -1
        out.append(list(key) + [vals["ra_rate"][0], vals["hybrid_rate"][0], vals["genie_rate"][0], n1,
                                vals["ra_rate"][1], vals["hybrid_rate"][1], vals["genie_rate"][1],
                                len(ok), len(rows) - len(ok)])
    return out


AGG_TAIL = ["ra_rate", "hybrid_rate", "genie_rate", "n1", "ra_std", "hybrid_std", "genie_std",
            "n_seeds", "n_failed"]


def _map(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def _task(args):
    cfg, seed, point, traffic, k, n_drl = args
    return run_seed(cfg, seed, point, traffic, k, n_drl)


@dataclass
class ExperimentResult:
    paths: dict[str, Path]
    rows: list[list]
    header: list[str]
    seeds: list[SeedResult]


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run a configured experiment and write its CSVs under ``cfg.output_path``."""
    if cfg.kind == "transfer":
        return run_transfer(cfg, cfg.transfer)
    out = cfg.output_path / cfg.name
    if cfg.kind == "rate_vs_delta":
        points = [(("delta",), (d,), TrafficSpec(**{**vars(cfg.traffic), "kind": "synthetic", "delta": d}),
                   cfg.k_nodes, cfg.n_drl) for d in cfg.deltas]
    elif cfg.kind == "rate_vs_k":
        n1s = cfg.n_drl_grid or (cfg.n_drl,) * len(cfg.deltas)
        if len(n1s) != len(cfg.deltas):
            raise ValueError("n_drl_grid must pair one N1 with each delta")
        points = [(("delta", "k"), (d, k), TrafficSpec(**{**vars(cfg.traffic), "kind": "synthetic", "delta": d}),
                   k, n1) for d, n1 in zip(cfg.deltas, n1s) for k in cfg.k_grid]
    else:  # instantaneous, custom
        points = [((), (), cfg.traffic, cfg.k_nodes, cfg.n_drl)]
    keys = list(points[0][0])
    tasks = [(cfg, seed, p, traffic, k, n1) for p, (_, _, traffic, k, n1) in enumerate(points)
             for seed in cfg.seeds]
    results = _map(_task, tasks, cfg.workers)

    per_seed_rows = []
    i = 0
    for _, vals, _, _, _ in points:
        for _ in cfg.seeds:
            r = results[i]
            i += 1
            per_seed_rows.append(list(vals) + [r.seed, r.ra_rate, r.hybrid_rate, r.genie_rate, r.n1, r.status])
    seed_header = keys + ["seed"] + PER_SEED_COLS
    paths = {"per_seed": out / "per_seed.csv"}
    write_csv(paths["per_seed"], seed_header, per_seed_rows)
    rows = aggregate(read_csv(paths["per_seed"]), keys)
    header = keys + AGG_TAIL
    paths["aggregate"] = out / f"{cfg.kind}.csv"
    write_csv(paths["aggregate"], header, rows)

    if cfg.kind in ("instantaneous", "custom"):
        ok = [r for r in results if r.status == "ok"]
        if ok:
            T = min(r.hybrid_per_slot.size for r in ok)
            slot_rows = [[t, float(np.mean([r.ra_per_slot[t] for r in ok])),
                          float(np.mean([r.hybrid_per_slot[t] for r in ok])),
                          float(np.mean([r.genie_per_slot[t] for r in ok]))] for t in range(T)]
            paths["per_slot"] = out / "per_slot.csv"
            write_csv(paths["per_slot"], ["slot", "ra_rate", "hybrid_rate", "genie_rate"], slot_rows)
    return ExperimentResult(paths, rows, header, results)


# transfer learning -----------------------------------------------------------

def evaluate_reward(agent: EnsembleAgent, trace: ActivityTrace, hcfg: HybridConfig,
                    rng: np.random.Generator, history: np.ndarray | None = None) -> float:
    """Greedy replay without learning; mean reward per slot as a fraction of ``K``.

    The protocol (and so the agent's state) runs on what the AP observes,
    but predictions are scored against the real activity.
    """
    K = trace.k_nodes
    history = np.zeros((K, agent.cfg.t_h)) if history is None else history
    act = trace.active.astype(bool)
    total = 0.0
    for t in range(trace.t_slots):
        res = run_slot(agent, history, act[:, t], hcfg, rng, slot=t, eps=0.0)
        history = res.history
        total += agent.group_rewards(res.predicted, act[:, t]).sum()
    return total / (K * trace.t_slots)


def plateau_slot(curve: np.ndarray, tol: float, window: int) -> int:
    """First slot where the moving-average reward is within ``tol`` of its plateau.

    The plateau is the mean over the last 10% of the curve. The moving
    average over ``window`` slots is compared relative to the plateau.
    """
    n = curve.size
    tail = curve[-max(1, n // 10):].mean()
    if n < window or tail <= 0:
        return n
    ma = np.convolve(curve, np.ones(window) / window, mode="valid")
    ok = np.flatnonzero(ma >= (1.0 - tol) * tail)
    return int(ok[0] + window) if ok.size else n


def run_transfer(cfg: ExperimentConfig, spec: TransferSpec) -> ExperimentResult:
    """Reward reached with and without CMMPP pretraining versus live budget.

    Writes ``transfer.csv`` with ``fraction,pretrained_reward_pct,control_reward_pct``
    normalised to the no-pretraining agent trained on the full sufficient
    live budget.
    """
    out = cfg.output_path / cfg.name
    per_seed_rows = []
    K, N, M = cfg.k_nodes, cfg.n_total, cfg.m_sequences
    n1 = cfg.n_drl if cfg.n_drl != "auto" else N // 2
    hcfg = HybridConfig(N, int(n1), M, cfg.agent.t_h)
    for seed in cfg.seeds:
        r_live, r_art, r_init, r_proto = seed_streams(seed, 0)
        live = make_trace(cfg.traffic, K, spec.max_live_slots + spec.eval_slots, r_live)
        held_out = live.slice(spec.max_live_slots, live.t_slots)
        artificial = gen_cmmpp(spec.cmmpp, K, spec.pretrain_slots, r_art)
        init_seeds = r_init.integers(0, 2**63, size=2 * len(spec.fractions) + 1)

        probe = EnsembleAgent(K, cfg.agent, np.random.default_rng(init_seeds[-1]))
        curve = run_hybrid(probe, live.slice(0, spec.max_live_slots), hcfg, r_proto).rewards.sum(axis=1) / K
        sufficient = max(1, plateau_slot(curve, spec.plateau_tol, spec.plateau_window))

        def trained(pretrain: bool, slots: int, init_seed) -> float:
            agent = EnsembleAgent(K, cfg.agent, np.random.default_rng(init_seed))
            history = None
            if pretrain:
                history = run_hybrid(agent, artificial, hcfg, r_proto).history
                agent.clear_replay()
                if spec.finetune_eps is not None:
                    agent.eps = EpsilonSchedule(spec.finetune_eps, agent.eps.floor, agent.eps.decay)
            if slots:
                history = run_hybrid(agent, live.slice(0, slots), hcfg, r_proto, history=history).history
            agent.freeze()
            return evaluate_reward(agent, held_out, hcfg, r_proto, history)

        for i, f in enumerate(spec.fractions):
            slots = int(round(f * sufficient))
            pre = trained(True, slots, init_seeds[2 * i])
            ctl = trained(False, slots, init_seeds[2 * i + 1])
            per_seed_rows.append([f, seed, sufficient, pre, ctl])
            log.info("seed %d fraction %.2f (%d live slots): pretrained %.3f control %.3f",
                     seed, f, slots, pre, ctl)

    paths = {"per_seed": out / "transfer_per_seed.csv"}
    write_csv(paths["per_seed"], ["fraction", "seed", "sufficient_slots", "pretrained_reward",
                                  "control_reward"], per_seed_rows)
    rows = aggregate_transfer(read_csv(paths["per_seed"]))
    header = ["fraction", "pretrained_reward_pct", "control_reward_pct"]
    paths["aggregate"] = out / "transfer.csv"
    write_csv(paths["aggregate"], header, rows)
    return ExperimentResult(paths, rows, header, [])


def aggregate_transfer(per_seed: list[dict[str, str]]) -> list[list]:
    """Seed-averaged rewards as a percentage of the full-budget control."""
    fr = sorted({float(r["fraction"]) for r in per_seed})
    mean = {}
    for f in fr:
        rows = [r for r in per_seed if float(r["fraction"]) == f]
        mean[f] = (float(np.mean([float(r["pretrained_reward"]) for r in rows])),
                   float(np.mean([float(r["control_reward"]) for r in rows])))
    ref_f = max(fr)
    ref = mean[ref_f][1]
    return [[f, 100.0 * mean[f][0] / ref, 100.0 * mean[f][1] / ref] for f in fr]
