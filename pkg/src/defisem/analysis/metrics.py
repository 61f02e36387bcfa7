"""Net worth and collateralization-safety metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from ..lending import (
    LpParams,
    collateral_value,
    collateralization,
    exchange_rate,
    loan_value,
)
from ..amm import pair_exchange_rate
from ..state import AmmMinted, Configuration, Free, LpMinted

ZERO = Fraction(0)


def net_worth(cfg: Configuration, user: str) -> Fraction:
    """Oracle value of a user's free tokens and pool claims, minus loans.

    Pool-minted units count at their exchange rate. AMM pair tokens count at
    their share of the pair reserves; without AMM holdings this term vanishes.
    """
    p = cfg.oracle
    total = ZERO
    for t, amt in cfg.wallets.get(user, {}).items():
        if isinstance(t, Free):
            total += amt * p[t]
        elif isinstance(t, LpMinted):
            total += amt * exchange_rate(cfg.lp, t.underlying) * p[t.underlying]
        elif isinstance(t, AmmMinted) and t.pair in cfg.amm.pairs:
            e0, e1 = pair_exchange_rate(cfg.amm.pairs[t.pair])
            total += amt * (e0 * p[t.t0] + e1 * p[t.t1])
    for t, amt in cfg.lp.loans.get(user, {}).items():
        total -= amt * p[t]
    return total


def nr_loan_value(cfg: Configuration, params: LpParams, user: str) -> Fraction:
    """Loan value left uncovered if the account were liquidated in full."""
    if collateralization(cfg, user) < params.r_liq:
        return loan_value(cfg, user) - collateral_value(cfg, user) / params.r_liq
    return ZERO


def total_loan_value(cfg: Configuration) -> Fraction:
    return sum((loan_value(cfg, u) for u in cfg.lp.loans), ZERO)


def epsilon_safety(cfg: Configuration, params: LpParams) -> Fraction:
    """Share of loan value held by accounts below the minimum collateralization."""
    total = total_loan_value(cfg)
    if total == 0:
        return ZERO
    under = sum((loan_value(cfg, u) for u in cfg.lp.loans if collateralization(cfg, u) < params.c_min), ZERO)
    return under / total


def strong_epsilon_safety(cfg: Configuration, params: LpParams) -> Fraction:
    """Share of loan value that full liquidation could not recover."""
    total = total_loan_value(cfg)
    if total == 0:
        return ZERO
    return sum((nr_loan_value(cfg, params, u) for u in cfg.lp.loans), ZERO) / total


@dataclass(frozen=True)
class AccountSafety:
    coll: Fraction | float
    loan_val: Fraction
    coll_val: Fraction
    nr_loan_val: Fraction


@dataclass(frozen=True)
class SafetyReport:
    epsilon_ratio: Fraction
    strong_epsilon_ratio: Fraction
    per_user: dict = field(default_factory=dict)


def safety_report(cfg: Configuration, params: LpParams) -> SafetyReport:
    per_user = {
        u: AccountSafety(
            collateralization(cfg, u),
            loan_value(cfg, u),
            collateral_value(cfg, u),
            nr_loan_value(cfg, params, u),
        )
        for u in cfg.users()
    }
    return SafetyReport(epsilon_safety(cfg, params), strong_epsilon_safety(cfg, params), per_user)


__all__ = [
    "AccountSafety",
    "SafetyReport",
    "epsilon_safety",
    "net_worth",
    "nr_loan_value",
    "safety_report",
    "strong_epsilon_safety",
    "total_loan_value",
]
