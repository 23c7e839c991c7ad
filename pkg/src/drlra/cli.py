"""Command-line entry point: ``drlra <command> [options]``.

Commands: ``generate``, ``train``, ``evaluate``, ``experiment``, ``analyze``.
Every command accepts ``--seed``, ``--config`` and ``--out``. Files land in
``--out`` (default ``.``; the ``DRLRA_OUT`` environment variable overrides
the experiment output directory).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .agent import EnsembleAgent
from .config import TRAFFIC, ExperimentConfig, load_config
from .core import ActivityTrace, average_packet_rate, genie_rate, make_rng
from .harness import evaluate_ra, make_trace, seed_streams, write_csv
from .hybrid import (HybridConfig, analytic_hybrid_rate, estimate_eps_stats, hybrid_slot_terms, run_hybrid,
                     slots_to_csv, stats_from_csv, stats_to_csv)
from .ra import MODES, RaConfig, analytic_ra_rate

log = logging.getLogger("drlra")


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # on the sub-parsers the defaults are suppressed so a flag given before the
    # command is not overwritten by the sub-parser's default
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0), help="base seed (default 0)")
    p.add_argument("--config", type=Path, default=d(None), help="INI experiment config")
    p.add_argument("--name", default=d(None), help="section of --config to use")
    p.add_argument("--out", type=Path, default=d(None), help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drlra", parents=[_global_flags(True)],
                                     description="DRL-aided random access simulator")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    glob = _global_flags(False)

    def traffic_flags(p):
        p.add_argument("--k", type=int, help="number of nodes")
        p.add_argument("--t", type=int, help="number of slots")
        p.add_argument("--traffic", choices=TRAFFIC, help="traffic source")
        p.add_argument("--delta", type=float, help="synthetic pattern randomness")
        p.add_argument("--log", dest="log_path", help="arrival log CSV (traffic=log)")

    def protocol_flags(p):
        p.add_argument("--n", type=int, help="total resource blocks N")
        p.add_argument("--n1", type=int, help="resource blocks for DRL grants")
        p.add_argument("--m", type=int, help="number of RA sequences M")

    g = sub.add_parser("generate", parents=[glob], help="write an activity trace CSV")
    traffic_flags(g)
    g.add_argument("--file", default="trace.csv", help="output file name")

    t = sub.add_parser("train", parents=[glob], help="train an agent and write a checkpoint")
    traffic_flags(t)
    protocol_flags(t)
    t.add_argument("--trace", type=Path, help="trace CSV to train on (default: generate one)")
    t.add_argument("--file", default="agent.qnet", help="checkpoint file name")

    e = sub.add_parser("evaluate", parents=[glob], help="rate a checkpoint on a trace")
    traffic_flags(e)
    protocol_flags(e)
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--trace", type=Path, help="trace CSV (default: generate one)")
    e.add_argument("--file", default="evaluation.csv", help="output file name")
    e.add_argument("--stats-file", help="also write per-slot prediction stats (input to analyze)")
    e.add_argument("--slots-file", help="also write per-slot protocol events")

    x = sub.add_parser("experiment", parents=[glob], help="run a configured experiment")
    x.add_argument("--seeds", help="override the seed list, e.g. 0-9")
    x.add_argument("--workers", type=int, help="worker processes")

    a = sub.add_parser("analyze", parents=[glob], help="closed-form rates from a stats CSV")
    protocol_flags(a)
    a.add_argument("--stats", type=Path, required=True, help="per-slot prediction stats CSV")
    a.add_argument("--k", type=int, help="number of nodes")
    a.add_argument("--mode", choices=MODES, default="simulation-consistent")
    a.add_argument("--file", default="analysis.csv", help="output file name")
    return parser


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.name) if args.config else ExperimentConfig()
    kw = {}
    for flag, key in (("k", "k_nodes"), ("t", "t_slots"), ("n", "n_total"), ("m", "m_sequences")):
        if getattr(args, flag, None) is not None:
            kw[key] = getattr(args, flag)
    if getattr(args, "n1", None) is not None:
        kw["n_drl"] = args.n1
    traffic = {}
    if getattr(args, "traffic", None):
        traffic["kind"] = args.traffic
    if getattr(args, "delta", None) is not None:
        traffic["delta"] = args.delta
    if getattr(args, "log_path", None):
        traffic["path"] = args.log_path
        traffic.setdefault("kind", "log")
    if traffic:
        kw["traffic"] = dataclasses.replace(cfg.traffic, **traffic)
    return cfg.replace(**kw) if kw else cfg


def _out_dir(args) -> Path:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_trace(path: Path) -> ActivityTrace:
    try:
        return ActivityTrace.from_csv(path.read_text())
    except OSError as exc:
        raise ValueError(f"cannot read trace {path}: {exc.strerror}") from None


def _trace(args, cfg: ExperimentConfig, rng) -> ActivityTrace:
    if getattr(args, "trace", None):
        return _read_trace(args.trace)
    return make_trace(cfg.traffic, cfg.k_nodes, cfg.t_slots, rng)


def _n1(cfg: ExperimentConfig) -> int:
    return cfg.n_total // 2 if cfg.n_drl == "auto" else int(cfg.n_drl)


def cmd_generate(args) -> Path:
    cfg = _base_config(args)
    trace = make_trace(cfg.traffic, cfg.k_nodes, cfg.t_slots, make_rng(args.seed))
    path = _out_dir(args) / args.file
    path.write_text(trace.to_csv())
    return path


def cmd_train(args) -> Path:
    cfg = _base_config(args)
    r_trace, r_init, r_proto, _ = seed_streams(args.seed, 0)
    trace = _trace(args, cfg, r_trace)
    hcfg = HybridConfig(cfg.n_total, _n1(cfg), cfg.m_sequences, cfg.agent.t_h)
    agent = EnsembleAgent(trace.k_nodes, cfg.agent, r_init)
    run = run_hybrid(agent, trace, hcfg, r_proto)
    log.info("trained on %d slots, final epsilon %.4f, mean reward %.4f",
             trace.t_slots, agent.eps.eps, run.rewards.sum(axis=1).mean() / trace.k_nodes)
    path = _out_dir(args) / args.file
    agent.save(path)
    return path


def cmd_evaluate(args) -> Path:
    cfg = _base_config(args)
    r_trace, _, r_proto, r_ra = seed_streams(args.seed, 1)
    try:
        agent = EnsembleAgent.load(args.checkpoint)
    except OSError as exc:
        raise ValueError(f"cannot read checkpoint {args.checkpoint}: {exc.strerror}") from None
    if args.k is None and not args.trace:
        cfg = cfg.replace(k_nodes=agent.k_nodes)
    trace = _trace(args, cfg, r_trace)
    if trace.k_nodes != agent.k_nodes:
        raise ValueError(f"trace has {trace.k_nodes} nodes but the checkpoint was trained for {agent.k_nodes}")
    agent.freeze()
    hcfg = HybridConfig(cfg.n_total, _n1(cfg), cfg.m_sequences, agent.cfg.t_h)
    run = run_hybrid(agent, trace, hcfg, r_proto, learn=False)
    hyb = run.rate(trace.k_nodes)
    ra = average_packet_rate(evaluate_ra(trace, cfg.n_total, cfg.m_sequences, r_ra), trace.k_nodes)
    gen = genie_rate(trace, cfg.n_total)
    rows = [[t, ra.per_slot[t], hyb.per_slot[t], gen.per_slot[t]] for t in range(trace.t_slots)]
    rows.append(["mean", ra.mean, hyb.mean, gen.mean])
    path = _out_dir(args) / args.file
    write_csv(path, ["slot", "ra_rate", "hybrid_rate", "genie_rate"], rows)
    log.info("RA %.4f hybrid %.4f genie %.4f", ra.mean, hyb.mean, gen.mean)
    if args.slots_file:
        (_out_dir(args) / args.slots_file).write_text(slots_to_csv(run.outcomes, run.rewards))
    if args.stats_file:
        stats = estimate_eps_stats(agent, trace, hcfg, r_proto)
        (_out_dir(args) / args.stats_file).write_text(stats_to_csv(stats))
    return path


def cmd_experiment(args) -> Path:
    from .config import _ints
    from .harness import run_experiment

    if not args.config:
        raise ValueError("experiment needs --config <path>")
    cfg = load_config(args.config, args.name)
    if args.seeds:
        cfg = cfg.replace(seeds=_ints(args.seeds))
    if args.workers:
        cfg = cfg.replace(workers=args.workers)
    if args.out is not None:
        cfg = cfg.replace(out_dir=str(args.out))
    res = run_experiment(cfg)
    for p in res.paths.values():
        log.info("wrote %s", p)
    return res.paths["aggregate"]


def cmd_analyze(args) -> Path:
    cfg = _base_config(args)
    try:
        stats = stats_from_csv(args.stats.read_text())
    except OSError as exc:
        raise ValueError(f"cannot read stats {args.stats}: {exc.strerror}") from None
    if not stats:
        raise ValueError(f"{args.stats} holds no slots")
    K = args.k if args.k is not None else cfg.k_nodes
    n1 = _n1(cfg)
    hcfg = HybridConfig(cfg.n_total, n1, cfg.m_sequences)
    ra = analytic_ra_rate([int(round(s.k_cor_active + s.k_mis_inactive)) for s in stats], RaConfig(cfg.m_sequences, cfg.n_total), K, args.mode)
    hyb = analytic_hybrid_rate(stats, hcfg, K, args.mode)
    rows = []
    for t, s in enumerate(stats):
        drl, ra_term = hybrid_slot_terms(s, hcfg, args.mode)
        rows.append([t, drl, ra_term, ra.per_slot[t], hyb.per_slot[t]])
    rows.append(["mean", "", "", ra.mean, hyb.mean])
    path = _out_dir(args) / args.file
    write_csv(path, ["slot", "drl_term", "ra_stage_term", "ra_rate", "hybrid_rate"], rows)
    log.info("N1=%d mode=%s: RA %.4f hybrid %.4f", n1, args.mode, ra.mean, hyb.mean)
    return path


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError, FloatingPointError, AssertionError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"drlra {args.command}: error: {msg}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
