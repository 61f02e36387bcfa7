"""Lending pool: derived quantities and the seven pool transition rules.

Every rule takes a ``Configuration`` and returns a new one, or raises a
``DefiError`` whose ``premise`` names the violated rule premise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

from .errors import (
    InsufficientBalance,
    InsufficientPoolFunds,
    NonPositiveAmount,
    NonPositiveRate,
    NotLiquidatable,
    OverLiquidation,
    RepayExceedsLoan,
    SeizeExceedsCollateral,
    SeizeMismatch,
    Undercollateralized,
    WrongTokenClass,
)
from .ledger import credit, debit
from .state import Configuration, Free, LpMinted, LpState, Token, fmt

ZERO = Fraction(0)
ONE = Fraction(1)
INF = math.inf

Coll = Union[Fraction, float]


# ---------------------------------------------------------------- interest models


@dataclass(frozen=True)
class Constant:
    """The same per-token rate at every accrual step."""

    rates: Mapping[Free, Fraction]
    default: Fraction | None = None

    def rate(self, t: Free, step: int, lp: LpState) -> Fraction:
        if t in self.rates:
            return self.rates[t]
        if self.default is None:
            raise NonPositiveRate(f"no interest rate configured for {t}")
        return self.default


@dataclass(frozen=True)
class Schedule:
    """Per-step rate tables, keyed by the accrual step index."""

    steps: Mapping[int, Mapping[Free, Fraction]]

    def rate(self, t: Free, step: int, lp: LpState) -> Fraction:
        table = self.steps.get(step)
        if table is None or t not in table:
            raise NonPositiveRate(f"no scheduled rate for {t} at step {step}")
        return table[t]


@dataclass(frozen=True)
class UtilizationLinear:
    """``base + slope * U(t)`` evaluated on the pre-accrual pool."""

    base: Fraction
    slope: Fraction

    def rate(self, t: Free, step: int, lp: LpState) -> Fraction:
        return self.base + self.slope * utilization(lp, t)


InterestModel = Union[Constant, Schedule, UtilizationLinear]


@dataclass(frozen=True)
class LpParams:
    """Pool parameters.

    ``oracle_source`` selects how the pool values tokens: ``"external"`` uses
    the oracle, ``"amm-snapshot"`` derives prices from the snapshot AMM rates
    against ``anchor``. ``waive`` lists liquidation premises (5 and/or 7) that
    are recorded as notes instead of enforced; it exists for replaying
    published tables whose rounding breaks them.
    """

    c_min: Fraction = Fraction(3, 2)
    r_liq: Fraction = Fraction(11, 10)
    interest: InterestModel = field(default_factory=lambda: Constant({}, Fraction(1, 10)))
    oracle_source: str = "external"
    anchor: Free | None = None
    waive: frozenset = frozenset()

    def __post_init__(self) -> None:
        if not (self.c_min > self.r_liq > 1):
            raise ValueError(f"need c_min > r_liq > 1, got c_min={fmt(self.c_min)}, r_liq={fmt(self.r_liq)}")
        if self.oracle_source not in ("external", "amm-snapshot"):
            raise ValueError(f"unknown oracle source {self.oracle_source!r}")


# ---------------------------------------------------------------- valuation


def pool_prices(cfg: Configuration, params: LpParams | None = None) -> dict[Free, Fraction]:
    """Prices the pool uses for collateral checks and seizure amounts."""
    prices = dict(cfg.oracle)
    if params is None or params.oracle_source == "external" or params.anchor is None:
        return prices
    anchor = params.anchor
    base = cfg.oracle[anchor]
    for (a, b), rate in cfg.snapshot.items():
        # rate = r1 / r0: units of b per unit of a
        if b == anchor and a != anchor:
            prices[a] = rate * base
        elif a == anchor and b != anchor and rate > 0:
            prices[b] = base / rate
    return prices


def exchange_rate(lp: LpState, t: Free) -> Fraction:
    """Underlying units redeemable per minted unit of ``t``.

    Computed as pool funds plus outstanding loans over minted supply; 1 while
    nothing is minted (or nothing is backing the supply).
    """
    s = lp.supply_of(t)
    if s == 0:
        return ONE
    backing = lp.fund(t) + lp.total_loans(t)
    if backing == 0:
        return ONE
    return backing / s


def loan_value(cfg: Configuration, user: str, prices: Mapping[Free, Fraction] | None = None) -> Fraction:
    prices = cfg.oracle if prices is None else prices
    loans = cfg.lp.loans.get(user, {})
    return sum((amt * prices[t] for t, amt in loans.items()), ZERO)


def collateral_value(cfg: Configuration, user: str, prices: Mapping[Free, Fraction] | None = None) -> Fraction:
    prices = cfg.oracle if prices is None else prices
    total = ZERO
    for t, amt in cfg.wallets.get(user, {}).items():
        if isinstance(t, LpMinted) and amt:
            u = t.underlying
            total += amt * exchange_rate(cfg.lp, u) * prices[u]
    return total


def collateralization(cfg: Configuration, user: str, params: LpParams | None = None) -> Coll:
    """Collateral value over loan value; ``math.inf`` for a user without loans."""
    prices = pool_prices(cfg, params)
    lv = loan_value(cfg, user, prices)
    if lv == 0:
        return INF
    return collateral_value(cfg, user, prices) / lv


def utilization(lp: LpState, t: Free) -> Fraction:
    lent = lp.total_loans(t)
    denom = lp.fund(t) + lent
    if denom == 0:
        return ZERO
    return lent / denom


def liquidatable(cfg: Configuration, params: LpParams) -> list[str]:
    return [u for u in sorted(cfg.lp.loans) if collateralization(cfg, u, params) < params.c_min]


# ---------------------------------------------------------------- pool-state helpers


def _add(m: Mapping, k, v: Fraction) -> dict:
    out = dict(m)
    nv = out.get(k, ZERO) + v
    if nv == 0:
        out.pop(k, None)
    else:
        out[k] = nv
    return out


def _with_loan(lp: LpState, user: str, t: Free, delta: Fraction) -> LpState:
    loans = dict(lp.loans)
    mine = _add(loans.get(user, {}), t, delta)
    if mine:
        loans[user] = mine
    else:
        loans.pop(user, None)
    return LpState(lp.funds, loans, lp.minted)


def _with_fund(lp: LpState, t: Free, delta: Fraction) -> LpState:
    return LpState(_add(lp.funds, t, delta), lp.loans, lp.minted)


def _with_minted(lp: LpState, t: Free, delta: Fraction) -> LpState:
    return LpState(lp.funds, lp.loans, _add(lp.minted, t, delta))


def _require_free(t: Token, premise: int | None = None) -> Free:
    if not isinstance(t, Free):
        raise WrongTokenClass(f"{t} is not a free token", premise=premise)
    return t


def _require_minted(lp: LpState, t: Token, premise: int | None = None) -> LpMinted:
    if not isinstance(t, LpMinted) or t.underlying not in lp.minted:
        raise WrongTokenClass(f"{t} is not a token minted by the pool", premise=premise)
    return t


def _require_positive(v: Fraction, premise: int | None = None) -> None:
    if v <= 0:
        raise NonPositiveAmount(f"amount must be positive, got {fmt(v)}", premise=premise)


# ---------------------------------------------------------------- rules


def deposit(cfg: Configuration, user: str, v: Fraction, t: Token) -> Configuration:
    t = _require_free(t, premise=2)
    _require_positive(v, premise=1)
    er = exchange_rate(cfg.lp, t)
    minted = v / er
    cfg = debit(cfg, user, v, t, premise=1)
    cfg = credit(cfg, user, minted, LpMinted(t))
    lp = _with_minted(_with_fund(cfg.lp, t, v), t, minted)
    return cfg.with_(lp=lp)


def borrow(cfg: Configuration, params: LpParams, user: str, v: Fraction, t: Token) -> Configuration:
    t = _require_free(t)
    _require_positive(v, premise=1)
    if cfg.lp.fund(t) < v:
        raise InsufficientPoolFunds(f"pool holds {fmt(cfg.lp.fund(t))} {t}, {user} asks {fmt(v)}", premise=1)
    lp = _with_loan(_with_fund(cfg.lp, t, -v), user, t, v)
    post = cfg.with_(lp=lp)
    c = collateralization(post, user, params)
    if c < params.c_min:
        raise Undercollateralized(f"{user} would be at {fmt(c)} < {fmt(params.c_min)}", premise=4)
    return credit(post, user, v, t)


def accrue_interest(cfg: Configuration, params: LpParams, step: int = 0) -> Configuration:
    lp = cfg.lp
    if not lp.loans:
        return cfg
    rates: dict[Free, Fraction] = {}
    for loans in lp.loans.values():
        for t in loans:
            if t not in rates:
                r = Fraction(params.interest.rate(t, step, lp))
                if r <= 0:
                    raise NonPositiveRate(f"interest rate for {t} must be positive, got {fmt(r)}")
                rates[t] = r
    new_loans = {
        user: {t: amt * (1 + rates[t]) for t, amt in loans.items()} for user, loans in lp.loans.items()
    }
    return cfg.with_(lp=LpState(lp.funds, new_loans, lp.minted))


def repay(cfg: Configuration, user: str, v: Fraction, t: Token) -> Configuration:
    t = _require_free(t)
    _require_positive(v, premise=1)
    if cfg.balance(user, t) < v:
        raise InsufficientBalance(f"{user} holds {fmt(cfg.balance(user, t))} {t}, repays {fmt(v)}", premise=1)
    if cfg.lp.loan(user, t) < v:
        raise RepayExceedsLoan(f"{user} owes {fmt(cfg.lp.loan(user, t))} {t}, repays {fmt(v)}", premise=2)
    cfg = debit(cfg, user, v, t, premise=1)
    lp = _with_loan(_with_fund(cfg.lp, t, v), user, t, -v)
    return cfg.with_(lp=lp)


def redeem(cfg: Configuration, params: LpParams, user: str, v: Fraction, t: Token) -> Configuration:
    m = _require_minted(cfg.lp, t)
    _require_positive(v, premise=1)
    if cfg.balance(user, m) < v:
        raise InsufficientBalance(f"{user} holds {fmt(cfg.balance(user, m))} {m}, redeems {fmt(v)}", premise=1)
    u = m.underlying
    out = v * exchange_rate(cfg.lp, u)
    if cfg.lp.fund(u) < out:
        raise InsufficientPoolFunds(f"pool holds {fmt(cfg.lp.fund(u))} {u}, redeem needs {fmt(out)}", premise=2)
    post = debit(cfg, user, v, m, premise=1)
    post = credit(post, user, out, u)
    post = post.with_(lp=_with_minted(_with_fund(post.lp, u, -out), u, -v))
    if cfg.lp.has_loan(user):
        c = collateralization(post, user, params)
        if c < params.c_min:
            raise Undercollateralized(f"{user} would be at {fmt(c)} < {fmt(params.c_min)}", premise=3)
    return post


def seize_amount(cfg: Configuration, params: LpParams, v: Fraction, t: Free, seized: LpMinted) -> Fraction:
    """Minted units seized for repaying ``v`` units of ``t``."""
    prices = pool_prices(cfg, params)
    return v * prices[t] / prices[seized.underlying] * params.r_liq


def liquidate(
    cfg: Configuration,
    params: LpParams,
    liquidator: str,
    borrower: str,
    v: Fraction,
    t: Token,
    seized_token: Token,
    seized: Fraction | None = None,
    waive: frozenset = frozenset(),
    notes: list[str] | None = None,
) -> tuple[Configuration, Fraction]:
    """Repay ``v`` of ``borrower``'s ``t`` loan and seize discounted collateral.

    The repaid units go back to the pool funds. When ``seized`` is given it is
    checked against the seizure formula; otherwise it is computed from it.
    Premises listed in ``waive`` (or ``params.waive``) are reported through
    ``notes`` instead of raising.
    """
    t = _require_free(t)
    waived = frozenset(waive) | params.waive
    if v < 0:
        raise NonPositiveAmount(f"repaid amount must be nonnegative, got {fmt(v)}")
    if cfg.balance(liquidator, t) < v:
        raise InsufficientBalance(f"{liquidator} holds {fmt(cfg.balance(liquidator, t))} {t}, repays {fmt(v)}", premise=1)
    if cfg.lp.loan(borrower, t) < v:
        raise RepayExceedsLoan(f"{borrower} owes {fmt(cfg.lp.loan(borrower, t))} {t}, repaid {fmt(v)}", premise=2)
    m = _require_minted(cfg.lp, seized_token, premise=3)
    before = collateralization(cfg, borrower, params)
    if not before < params.c_min:
        raise NotLiquidatable(f"{borrower} is at {fmt(before)} >= {fmt(params.c_min)}", premise=6)
    expected = seize_amount(cfg, params, v, t, m)
    if seized is None:
        seized = expected
    elif seized != expected:
        msg = f"seized {fmt(seized)} {m} but the seizure formula gives {fmt(expected)}"
        if 5 not in waived:
            raise SeizeMismatch(msg, premise=5)
        if notes is not None:
            notes.append(f"premise 5 waived: {msg}")
    if cfg.balance(borrower, m) < seized:
        raise SeizeExceedsCollateral(f"{borrower} holds {fmt(cfg.balance(borrower, m))} {m}, seize {fmt(seized)}", premise=4)
    post = debit(cfg, liquidator, v, t, premise=1)
    post = post.with_(lp=_with_loan(_with_fund(post.lp, t, v), borrower, t, -v))
    post = debit(post, borrower, seized, m, premise=4)
    post = credit(post, liquidator, seized, m)
    after = collateralization(post, borrower, params)
    if after > params.c_min:
        msg = f"{borrower} would end at {fmt(after)} > {fmt(params.c_min)}"
        if 7 not in waived:
            raise OverLiquidation(msg, premise=7)
        if notes is not None:
            notes.append(f"premise 7 waived: {msg}")
    return post, seized


def max_liquidation(cfg: Configuration, params: LpParams, borrower: str, t: Free, seized_token: LpMinted) -> Fraction:
    """Largest repayment of ``t`` that keeps the borrower at or below ``c_min``.

    Also bounded by the outstanding loan and the borrower's holding of the
    seized token. Returns 0 when the borrower is not liquidatable. The bound
    is a supremum when it would clear the borrower's entire loan value, since
    a loan-free borrower has infinite collateralization.
    """
    if not collateralization(cfg, borrower, params) < params.c_min:
        return ZERO
    prices = pool_prices(cfg, params)
    loan = cfg.lp.loan(borrower, t)
    er = exchange_rate(cfg.lp, seized_token.underlying)
    unit_seize = prices[t] / prices[seized_token.underlying] * params.r_liq
    bound = min(loan, cfg.balance(borrower, seized_token) / unit_seize)
    # value left after repaying v: collVal - v*p*r*ER over loanVal - v*p must stay <= c_min
    lv = loan_value(cfg, borrower, prices)
    cv = collateral_value(cfg, borrower, prices)
    coef = prices[t] * (params.c_min - params.r_liq * er)
    rhs = params.c_min * lv - cv
    # rhs > 0 for a liquidatable borrower, so a nonpositive coef never binds
    if coef > 0:
        bound = min(bound, rhs / coef)
    return max(bound, ZERO)


def transfer_minted(cfg: Configuration, params: LpParams, sender: str, receiver: str, v: Fraction, t: Token) -> Configuration:
    m = _require_minted(cfg.lp, t)
    if v < 0:
        raise NonPositiveAmount(f"amount must be nonnegative, got {fmt(v)}")
    post = debit(cfg, sender, v, m, premise=1)
    post = credit(post, receiver, v, m)
    c = collateralization(post, sender, params)
    if c < params.c_min:
        raise Undercollateralized(f"{sender} would be at {fmt(c)} < {fmt(params.c_min)}")
    return post
