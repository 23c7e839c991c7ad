"""Simulator for DRL-aided random access in an IoT cell.

Submodules: ``core`` (traces, outcomes, rates), ``activity`` (traffic),
``ra`` (conventional random access), ``agent`` (numpy deep Q-network),
``hybrid`` (the DRL-aided protocol and its analytic rate), ``harness``
(experiments) and ``cli``.
"""

from .activity import (ArrivalLog, CmmppParams, SyntheticParams, gen_cmmpp, gen_synthetic,
                       ingest_trace, periodic_log)
from .agent import AgentConfig, EnsembleAgent, QNetwork, init_qnetwork
from .config import ExperimentConfig, TrafficSpec, TransferSpec, load_config
from .core import ActivityTrace, RateSeries, SlotOutcome, average_packet_rate, genie_rate, make_rng
from .harness import run_experiment, run_transfer
from .hybrid import (EpsilonStats, HybridConfig, analytic_hybrid_rate, noRB_expected, run_hybrid,
                     run_slot, select_n1)
from .ra import RaConfig, analytic_ra_rate, simulate_ra_contention

__version__ = "0.1.0"
