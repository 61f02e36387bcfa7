"""Derived metrics, the liquidation optimizer and attack-trace generators."""

from __future__ import annotations

from .attacks import (
    AttackTrace,
    gen_arbitrage,
    gen_over_utilization_attack,
    gen_price_oracle_attack,
    gen_sandwich_attack,
    replay_trace,
)
from .liquidation import LiquidationPlan, check_plan, optimal_liquidation, optimal_liquidation_oracle
from .metrics import (
    SafetyReport,
    epsilon_safety,
    net_worth,
    nr_loan_value,
    safety_report,
    strong_epsilon_safety,
)

__all__ = [
    "AttackTrace",
    "LiquidationPlan",
    "SafetyReport",
    "check_plan",
    "epsilon_safety",
    "gen_arbitrage",
    "gen_over_utilization_attack",
    "gen_price_oracle_attack",
    "gen_sandwich_attack",
    "net_worth",
    "nr_loan_value",
    "optimal_liquidation",
    "optimal_liquidation_oracle",
    "replay_trace",
    "safety_report",
    "strong_epsilon_safety",
]
