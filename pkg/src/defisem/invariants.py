"""Step invariants checked during replay and fuzzing.

Each check takes the configurations around one top-level step and returns a
list of violation messages; an empty list means the step is clean.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

from .engine import AmmDep, AmmRdm, AmmSwap, AtomicGroup, Int, Params
from .lending import exchange_rate
from .ledger import supply
from .state import Configuration, Free, LpMinted, fmt

ZERO = Fraction(0)


def minted_supply(cfg: Configuration) -> list[str]:
    """Circulating pool-minted units equal the recorded minted supply."""
    out = []
    held: dict[Free, Fraction] = {}
    for wallet in cfg.wallets.values():
        for t, a in wallet.items():
            if isinstance(t, LpMinted):
                held[t.underlying] = held.get(t.underlying, ZERO) + a
    for u in set(held) | set(cfg.lp.minted):
        if held.get(u, ZERO) != cfg.lp.supply_of(u):
            out.append(f"minted-supply: {u}' held {fmt(held.get(u, ZERO))}, recorded {fmt(cfg.lp.supply_of(u))}")
    return out


def exchange_rate_change(pre: Configuration, post: Configuration, tx) -> list[str]:
    """Rates rise strictly under interest on a live loan and stay put otherwise.

    Only tokens minted before and after the step are compared; atomic groups
    are skipped because a flash loan moves the rate inside the group.
    """
    if isinstance(tx, AtomicGroup):
        return []
    out = []
    for u in set(pre.lp.minted) & set(post.lp.minted):
        before, after = exchange_rate(pre.lp, u), exchange_rate(post.lp, u)
        if isinstance(tx, Int) and pre.lp.total_loans(u) > 0:
            if not after > before:
                out.append(f"exchange-rate: {u} went {fmt(before)} -> {fmt(after)} under interest with a live loan")
        elif after != before:
            out.append(f"exchange-rate: {u} went {fmt(before)} -> {fmt(after)} under {type(tx).__name__}")
    return out


def supply_conservation(pre: Configuration, post: Configuration, tx=None) -> list[str]:
    """Free-token supply (pool funds, wallets, AMM reserves) never changes."""
    out = []
    for t in pre.free_tokens() | post.free_tokens():
        a, b = supply(pre, t), supply(post, t)
        if a != b:
            out.append(f"supply: {t} went {a} -> {b}")
    return out


def amm_laws(pre: Configuration, post: Configuration, tx, fee: Fraction = ZERO) -> list[str]:
    """Constant product and price monotonicity for swaps, rate invariance for deposits and redeems.

    With a positive fee the product must strictly grow instead of staying put.
    """
    out = []
    if isinstance(tx, AmmSwap):
        key, a = pre.amm.find(tx.token_in, tx.token_out)
        b = post.amm.pairs[key]
        k0, k1 = a.r0 * a.r1, b.r0 * b.r1
        if fee == 0 and k0 != k1:
            out.append(f"constant-product: {key[0]}/{key[1]} product {fmt(k0)} -> {fmt(k1)}")
        if fee > 0 and not k1 > k0:
            out.append(f"constant-product: {key[0]}/{key[1]} product did not grow {fmt(k0)} -> {fmt(k1)}")
        # selling token_in lowers its price in token_out
        before = a.r1 / a.r0 if key[0] == tx.token_in else a.r0 / a.r1
        after = b.r1 / b.r0 if key[0] == tx.token_in else b.r0 / b.r1
        if not after < before:
            out.append(f"price-monotonicity: {tx.token_in} in {tx.token_out} went {fmt(before)} -> {fmt(after)}")
    elif isinstance(tx, (AmmDep, AmmRdm)):
        key = (tx.t0, tx.t1) if isinstance(tx, AmmDep) else tx.token.pair
        a, b = pre.amm.pairs.get(key), post.amm.pairs.get(key)
        if a is not None and b is not None and a.funded and b.funded and a.r1 * b.r0 != b.r1 * a.r0:
            out.append(f"price-invariance: {key[0]}/{key[1]} rate {fmt(a.r1 / a.r0)} -> {fmt(b.r1 / b.r0)}")
    return out


CHECKS: dict[str, Callable[..., list[str]]] = {
    "minted-supply": lambda pre, post, tx, params: minted_supply(post),
    "exchange-rate": lambda pre, post, tx, params: exchange_rate_change(pre, post, tx),
    "supply": lambda pre, post, tx, params: supply_conservation(pre, post, tx),
    "amm": lambda pre, post, tx, params: amm_laws(pre, post, tx, params.swap.fee),
}
DEFAULT_CHECKS = ("minted-supply", "exchange-rate", "supply")


def check_step(
    pre: Configuration, post: Configuration, tx, params: Params, names=tuple(CHECKS)
) -> list[str]:
    out: list[str] = []
    for name in names:
        out.extend(CHECKS[name](pre, post, tx, params))
    return out


__all__ = [
    "CHECKS",
    "DEFAULT_CHECKS",
    "amm_laws",
    "check_step",
    "exchange_rate_change",
    "minted_supply",
    "supply_conservation",
]
