"""Baseline schedulers and exhaustive DP oracles."""

from evabid.benchmarks.baselines import BaselineResult, run_b1, run_b2, run_b3
from evabid.benchmarks.oracle import (
    OracleInstance,
    oracle_dp,
    oracle_nested_risk,
    random_instance,
    richardson_check,
)
