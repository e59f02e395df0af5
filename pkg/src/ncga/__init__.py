"""Distributed, pipelined genetic algorithms for minimum-coding network coding."""

from .engine import GAConfig, RunStats, greedy_sweep, run, theoretical_efficiency
from .galois import GaloisField, get_field
from .genome import CODED, INFEASIBLE, NONE, Genotype
from .netgraph import (Network, block_layout, build_butterfly, build_butterfly_prime, build_cascade,
                       build_dense, build_named, longest_path, oracle_feasible)
from .protocol import Pipeline, evaluate_batch

__all__ = [
    "CODED",
    "GAConfig",
    "GaloisField",
    "Genotype",
    "INFEASIBLE",
    "NONE",
    "Network",
    "Pipeline",
    "RunStats",
    "block_layout",
    "build_butterfly",
    "build_butterfly_prime",
    "build_cascade",
    "build_dense",
    "build_named",
    "evaluate_batch",
    "get_field",
    "greedy_sweep",
    "longest_path",
    "oracle_feasible",
    "run",
    "theoretical_efficiency",
]
