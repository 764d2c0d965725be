"""Seeded simulator of a community-based, belief-fusing consensus protocol for
UTXO-style ledgers."""

from .beliefs import Decision, beta, forced_decision, local_decision, update_actual, update_intermediate
from .classifier import LogisticScorer, ThresholdParams, WeightVector
from .config import RunConfig, load_config
from .consensus import Simulation, assign_communities, collective_decision, run_simulation
from .ledger import AttributeVector, Ledger, Perception, Transaction
from .metrics import RunMetrics, compute_metrics, latency_cdf, run_sweep

__all__ = [
    "AttributeVector",
    "Decision",
    "Ledger",
    "LogisticScorer",
    "Perception",
    "RunConfig",
    "RunMetrics",
    "Simulation",
    "ThresholdParams",
    "Transaction",
    "WeightVector",
    "assign_communities",
    "beta",
    "collective_decision",
    "compute_metrics",
    "forced_decision",
    "latency_cdf",
    "load_config",
    "local_decision",
    "run_simulation",
    "run_sweep",
    "update_actual",
    "update_intermediate",
]

__version__ = "0.1.0"
