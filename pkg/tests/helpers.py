"""Shared builders for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction

from defisem.lending import LpParams
from defisem.scenario import parse_configuration
from defisem.state import Configuration, Free, LpMinted, LpState

T0, T1, T2 = Free("τ0"), Free("τ1"), Free("τ2")
M0, M1, M2 = LpMinted(T0), LpMinted(T1), LpMinted(T2)
F = Fraction


def make(**obj) -> Configuration:
    """Configuration from the scenario-file literal format (amounts as text or ints)."""
    obj.setdefault("prices", {"τ0": 1, "τ1": 1, "τ2": 1})
    return parse_configuration(obj)


def liquidation_instance(rng: random.Random) -> Configuration:
    """A small random lending state: up to 3 victims, up to 2 collateral tokens.

    Collateral pools hold at least their minted supply, so exchange rates are
    at least 1, and a lender may hold a loan on a collateral token to push
    its rate above 1.
    """
    t = (T0, T1, T2)
    prices = {x: F(rng.randint(1, 6), rng.randint(1, 3)) for x in t}
    coll_toks = rng.sample([T1, T2], rng.randint(1, 2))
    wallets: dict = {}
    loans: dict = {}
    for i in range(rng.randint(1, 3)):
        name = f"V{i}"
        w = {LpMinted(c): F(rng.randint(0, 10)) for c in coll_toks}
        w = {k: v for k, v in w.items() if v}
        if not w:
            w = {LpMinted(coll_toks[0]): F(rng.randint(1, 10))}
        wallets[name] = w
        debt_toks = rng.sample([T0] + [x for x in t if x not in coll_toks], 1 + rng.randint(0, 1))
        loans[name] = {lt: F(rng.randint(1, 12)) for lt in debt_toks}
    minted, funds = {}, {}
    for c in coll_toks:
        held = sum(w.get(LpMinted(c), 0) for w in wallets.values())
        minted[c] = F(held + rng.randint(0, 5))
        funds[c] = F(rng.randint(int(minted[c]), int(minted[c]) * 2))
    funds[T0] = F(100)
    extra = {c: F(rng.randint(1, 5)) for c in coll_toks if rng.random() < 0.5}
    if extra:
        loans["Z"] = extra
        wallets["Z"] = {M0: F(1000)}
        minted[T0] = F(1000)
        funds[T0] = F(1000)
    return Configuration(wallets=wallets, lp=LpState(funds, loans, minted), oracle=prices)


DEFAULT = LpParams()
