"""Skewed elastic-associativity cache laboratory.

Simulates a cipher-indexed, skewed last-level cache whose logical associativity
is set per security domain, plus the contention attack pipeline (Prime+Prune+
Probe profiling, Prime+Probe evaluation) used to measure it, a trace-driven
performance harness, and closed-form storage/latency cost models.
"""

__version__ = "0.1.0"

from .attack import (
    AttackConfig,
    PCESet,
    attack_success_rate,
    optimal_k_sweep,
    ppp_profile,
    prime_probe_round,
)
from .cache import BASE_LATENCY_CYCLES, AccessResult, CacheGeometry, CacheState, access_latency
from .domains import HIGH_SDID, NORMAL_SDID, DomainTable, Page, SecurityDomain
from .errors import ConfigError, StaleEvictionSetError, TraceParseError
from .experiments import ExperimentRecord, run_cell, run_grid, wilson_interval
from .overhead import latency_table, tag_layout, total_storage
from .prince import index_of, prince_decrypt, prince_encrypt
from .tracesim import TraceRecord, run_trace, synth_trace

__all__ = [
    "AccessResult",
    "AttackConfig",
    "BASE_LATENCY_CYCLES",
    "CacheGeometry",
    "CacheState",
    "ConfigError",
    "DomainTable",
    "ExperimentRecord",
    "HIGH_SDID",
    "NORMAL_SDID",
    "PCESet",
    "Page",
    "SecurityDomain",
    "StaleEvictionSetError",
    "TraceParseError",
    "TraceRecord",
    "access_latency",
    "attack_success_rate",
    "index_of",
    "latency_table",
    "optimal_k_sweep",
    "ppp_profile",
    "prime_probe_round",
    "prince_decrypt",
    "prince_encrypt",
    "run_cell",
    "run_grid",
    "run_trace",
    "synth_trace",
    "tag_layout",
    "total_storage",
    "wilson_interval",
    "__version__",
]
