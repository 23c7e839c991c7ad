"""Experiment configuration and its INI-style file format.

A config file holds one section per experiment. Keys are flat; agent
hyper-parameters use an ``agent.`` prefix, CMMPP parameters ``cmmpp.``.
Every key has a default, so an empty section reproduces the reference
settings (M = 54, gamma = 0.05, alpha = 0.001, epsilon 1 -> 0.01)::

    [fig2]
    kind = rate_vs_delta
    k_nodes = 20
    n_total = 10
    n_drl = auto
    deltas = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9
    seeds = 0-9
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .activity import CmmppParams
from .agent import AgentConfig

KINDS = ("rate_vs_delta", "rate_vs_k", "instantaneous", "transfer", "custom")
TRAFFIC = ("synthetic", "cmmpp", "periodic", "log")
OUT_ENV = "DRLRA_OUT"


@dataclass
class TrafficSpec:
    """Where the ground-truth activity comes from.

    ``synthetic`` uses ``delta``; ``cmmpp`` uses ``cmmpp``; ``periodic``
    synthesises an arrival log from ``periods`` (seconds) and slots it;
    ``log`` ingests the arrival CSV at ``path``.
    """

    kind: str = "synthetic"
    delta: float = 0.3
    cmmpp: CmmppParams = field(default_factory=CmmppParams)
    periods: tuple[float, ...] = (1, 2, 3, 4)
    jitter_s: float = 0.0
    path: str = ""
    slot_duration_s: float = 1.0
    window_start_s: float = 0.0

    def __post_init__(self):
        if self.kind not in TRAFFIC:
            raise ValueError(f"unknown traffic kind {self.kind!r}; expected one of {TRAFFIC}")


@dataclass
class TransferSpec:
    pretrain_slots: int = 4000
    fractions: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    cmmpp: CmmppParams = field(default_factory=CmmppParams)
    max_live_slots: int = 6000
    eval_slots: int = 1000
    plateau_tol: float = 0.01
    plateau_window: int = 200
    finetune_eps: float | None = None  # None: keep the pretrained epsilon

    def __post_init__(self):
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ValueError("live fractions must lie in [0, 1]")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    kind: str = "custom"
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    k_nodes: int = 20
    n_total: int = 10
    n_drl: int | str = "auto"
    n1_train: int | None = None
    m_sequences: int = 54
    t_slots: int = 25_000
    train_fraction: float = 0.8
    deltas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    k_grid: tuple[int, ...] = (20, 40, 60, 80, 100)
    n_drl_grid: tuple[int, ...] = ()
    agent: AgentConfig = field(default_factory=AgentConfig)
    transfer: TransferSpec = field(default_factory=TransferSpec)
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not self.seeds:
            raise ValueError("seed list must be nonempty")
        for name in ("k_nodes", "n_total", "m_sequences", "t_slots"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_drl != "auto" and not 0 <= int(self.n_drl) <= self.n_total:
            raise ValueError("n_drl must be 'auto' or an integer in [0, n_total]")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")

    @property
    def output_path(self) -> Path:
        return Path(os.environ.get(OUT_ENV) or self.out_dir)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())


def _ints(v: str) -> tuple[int, ...]:
    out = []
    for part in v.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _coerce(cls, key: str, raw: str):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    if key not in types:
        raise KeyError(key)
    t = str(types[key])
    if t.startswith("tuple[float"):
        return _floats(raw)
    if t.startswith("tuple[int"):
        return _ints(raw)
    if t == "bool":
        return _bool(raw)
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    if t == "float | None":
        return None if raw.strip().lower() in ("", "none") else float(raw)
    if t == "int | None":
        return None if raw.strip().lower() in ("", "none") else int(raw)
    if t == "int | str":
        return raw.strip() if raw.strip() == "auto" else int(raw)
    return raw.strip()


def config_from_section(name: str, items: dict[str, str]) -> ExperimentConfig:
    top, agent, traffic, transfer, cmmpp, pre_cmmpp = {}, {}, {}, {}, {}, {}
    targets = {
        "agent.": (agent, AgentConfig),
        "traffic.": (traffic, TrafficSpec),
        "transfer.": (transfer, TransferSpec),
        "cmmpp.": (cmmpp, CmmppParams),
        "pretrain.": (pre_cmmpp, CmmppParams),
    }
    for key, raw in items.items():
        try:
            for prefix, (dest, cls) in targets.items():
                if key.startswith(prefix):
                    sub = key[len(prefix):]
                    dest[sub] = _coerce(cls, sub, raw)
                    break
            else:
                if key == "traffic":
                    traffic["kind"] = raw.strip()
                elif key in ("delta", "periods", "path", "jitter_s", "slot_duration_s"):
                    traffic[key] = _coerce(TrafficSpec, key, raw)
                else:
                    top[key] = _coerce(ExperimentConfig, key, raw)
        except KeyError:
            raise ValueError(f"[{name}] unknown key {key!r}") from None
        except ValueError as exc:
            raise ValueError(f"[{name}] bad value for {key!r}: {exc}") from None
    if cmmpp:
        traffic["cmmpp"] = CmmppParams(**cmmpp)
    if pre_cmmpp:
        transfer["cmmpp"] = CmmppParams(**pre_cmmpp)
    return ExperimentConfig(
        name=name,
        traffic=TrafficSpec(**traffic),
        agent=AgentConfig(**agent),
        transfer=TransferSpec(**transfer),
        **top,
    )


def load_config(path, name: str | None = None) -> ExperimentConfig:
    """Read one experiment section from an INI file.

    Without ``name`` the file must hold exactly one section (or none, which
    yields the defaults).
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValueError(f"cannot read config {p}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(p))
    except configparser.Error as exc:
        raise ValueError(f"cannot parse config {p}: {exc}") from None
    sections = parser.sections()
    if name is None:
        if len(sections) > 1:
            raise ValueError(f"{p} holds several experiments {sections}; pick one by name")
        if not sections:
            return ExperimentConfig()
        name = sections[0]
    if name not in parser:
        raise ValueError(f"{p} has no experiment section [{name}]")
    return config_from_section(name, dict(parser[name]))
