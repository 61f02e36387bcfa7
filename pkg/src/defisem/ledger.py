"""Exact-arithmetic token ledger: balance updates, transfers, prices, supply."""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping

from .errors import (
    InsufficientBalance,
    MissingPrice,
    NonPositivePrice,
    NotFreeToken,
    UnderfundedUpdate,
)
from .state import Configuration, Free, Token, fmt

ZERO = Fraction(0)


def update_balance(f: Mapping[Token, Fraction], op: str, v: Fraction, t: Token) -> dict[Token, Fraction]:
    """Return ``f`` with ``v`` units of ``t`` added (``op == "+"``) or removed (``"-"``).

    Entries are kept even when they reach zero; callers that want a
    normalized map use :func:`credit`/:func:`debit`.
    """
    out = dict(f)
    if op == "+":
        out[t] = out.get(t, ZERO) + v
        return out
    if op != "-":
        raise ValueError(f"op must be '+' or '-', got {op!r}")
    if t not in out or out[t] < v:
        raise UnderfundedUpdate(f"cannot remove {fmt(v)} {t}: balance {fmt(out.get(t, ZERO))}")
    out[t] = out[t] - v
    return out


def _normalized(f: dict) -> dict:
    return {k: x for k, x in f.items() if x != 0}


def credit(cfg: Configuration, user: str, v: Fraction, t: Token) -> Configuration:
    if v == 0:
        return cfg
    wallets = dict(cfg.wallets)
    wallets[user] = _normalized(update_balance(wallets.get(user, {}), "+", v, t))
    return cfg.with_(wallets=wallets)


def debit(cfg: Configuration, user: str, v: Fraction, t: Token, premise: int | None = None) -> Configuration:
    have = cfg.balance(user, t)
    if have < v:
        raise InsufficientBalance(f"{user} holds {fmt(have)} {t}, needs {fmt(v)}", premise=premise)
    if v == 0:
        return cfg
    wallets = dict(cfg.wallets)
    bal = _normalized(update_balance(wallets.get(user, {}), "-", v, t))
    if bal:
        wallets[user] = bal
    else:
        wallets.pop(user, None)
    return cfg.with_(wallets=wallets)


def transfer(cfg: Configuration, sender: str, receiver: str, v: Fraction, t: Token) -> Configuration:
    """Move ``v`` units of free token ``t`` between wallets. Zero is a no-op."""
    if not isinstance(t, Free):
        raise NotFreeToken(f"{t} is not a free token", premise=2)
    cfg = debit(cfg, sender, v, t, premise=1)
    return credit(cfg, receiver, v, t)


def set_prices(cfg: Configuration, prices: Mapping[Free, Fraction]) -> Configuration:
    """Replace the oracle. Every free token in ``cfg`` must be priced, strictly positively."""
    for t, p in prices.items():
        if p <= 0:
            raise NonPositivePrice(f"price of {t} must be positive, got {fmt(p)}")
    missing = cfg.free_tokens() - set(prices)
    if missing:
        names = ", ".join(sorted(str(t) for t in missing))
        raise MissingPrice(f"no price for {names}")
    return cfg.with_(oracle=dict(prices))


def supply(cfg: Configuration, t: Token) -> Fraction:
    """Units of free token ``t`` in existence: pool funds, AMM reserves and all wallets.

    Without AMM pairs this is exactly pool funds plus wallet balances.
    """
    if not isinstance(t, Free):
        raise NotFreeToken(f"supply is defined for free tokens, got {t}")
    total = cfg.lp.fund(t)
    for bal in cfg.wallets.values():
        total += bal.get(t, ZERO)
    for (a, b), ps in cfg.amm.pairs.items():
        if a == t:
            total += ps.r0
        elif b == t:
            total += ps.r1
    return total
