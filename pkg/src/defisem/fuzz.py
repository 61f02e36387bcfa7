"""Random trace generation with invariant checking and greedy shrinking.

A trace starts from a random configuration and applies state-aware random
transactions, mostly valid but occasionally not. After every accepted step
the profile's invariants are checked; any exception that is not a
``DefiError`` counts as a totality violation. Runs are deterministic per seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

from .amm import SwapParams, refresh_snapshot
from .engine import (
    AmmDep,
    AmmRdm,
    AmmSwap,
    AtomicGroup,
    Authorization,
    Bor,
    Dep,
    FBorrow,
    FBorrowM,
    FlashParams,
    FRepay,
    FRepayM,
    Int,
    Liq,
    Mtrf,
    NetworkState,
    Params,
    Px,
    Rdm,
    Rep,
    Trf,
    announce,
    execute_group,
    step,
)
from .errors import DefiError
from .invariants import CHECKS, DEFAULT_CHECKS
from .lending import (
    Constant,
    LpParams,
    collateral_value,
    collateralization,
    deposit,
    exchange_rate,
    liquidatable,
    loan_value,
    max_liquidation,
    pool_prices,
)
from .amm import amm_deposit
from .state import AmmMinted, Configuration, Free, LpMinted, token_key

ZERO = Fraction(0)
TOKENS = (Free("τ0"), Free("τ1"), Free("τ2"))
USERS = ("A", "B", "C", "D")
PRICES = (Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2), Fraction(5, 2))
GRID = 100


@dataclass(frozen=True)
class Profile:
    name: str
    kinds: tuple[tuple[str, int], ...]
    checks: tuple[str, ...] = DEFAULT_CHECKS
    amm_fee: Fraction = ZERO
    flash_fee: Fraction = ZERO
    seed_amm: bool = False

    def params(self) -> Params:
        lp = LpParams(interest=Constant({}, Fraction(1, 20)))
        return Params(lp=lp, swap=SwapParams(self.amm_fee), flash=FlashParams(self.flash_fee))


_LP_KINDS = (("Dep", 4), ("Bor", 4), ("Rep", 2), ("Rdm", 2), ("Int", 2), ("Liq", 3), ("Px", 2), ("Trf", 1), ("Mtrf", 1))
_AMM_KINDS = (("AmmDep", 3), ("AmmSwap", 6), ("AmmRdm", 2), ("Trf", 1))

PROFILES: dict[str, Profile] = {
    "lp": Profile("lp", _LP_KINDS),
    "amm": Profile("amm", _AMM_KINDS, DEFAULT_CHECKS + ("amm",), seed_amm=True),
    "amm-fee": Profile("amm-fee", _AMM_KINDS, DEFAULT_CHECKS + ("amm",), amm_fee=Fraction(3, 1000), seed_amm=True),
    "full": Profile(
        "full",
        _LP_KINDS + _AMM_KINDS + (("Group", 4),),
        DEFAULT_CHECKS + ("amm",),
        flash_fee=Fraction(1, 100),
        seed_amm=True,
    ),
}


@dataclass(frozen=True)
class Violation:
    trace: int
    step: int
    check: str
    message: str
    shrunk: tuple = ()


@dataclass
class FuzzReport:
    seed: int
    profile: str
    traces: int
    steps: int
    accepted: int = 0
    rejected: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        lines = [
            f"profile={self.profile} seed={self.seed} traces={self.traces} steps/trace={self.steps}",
            f"accepted={self.accepted} rejected={self.rejected} violations={len(self.violations)}",
        ]
        for v in self.violations[:10]:
            lines.append(f"  trace {v.trace} step {v.step}: {v.message}")
            for tx in v.shrunk:
                lines.append(f"    {tx!r}")
        return "\n".join(lines)


# ---------------------------------------------------------------- amounts


def _grid(x: Fraction) -> Fraction:
    """Round down to the 1/100 grid, but never below one grid step."""
    return max(Fraction(math.floor(x * GRID), GRID), Fraction(1, GRID))


def _part(rng: random.Random, cap: Fraction, parts: int = 4) -> Fraction:
    """A random share ``k/parts`` of ``cap`` (k < parts), or an arbitrary amount 5% of the time."""
    if cap <= 0 or rng.random() < 0.05:
        return Fraction(rng.randint(1, 200))
    return _grid(cap * rng.randint(1, parts - 1) / parts)


# ---------------------------------------------------------------- configurations


def random_configuration(rng: random.Random, profile: Profile) -> Configuration:
    wallets = {u: {t: Fraction(rng.randint(50, 500)) for t in TOKENS} for u in USERS}
    cfg = Configuration(wallets=wallets, oracle={t: rng.choice(PRICES) for t in TOKENS})
    if profile.seed_amm:
        for a, b in zip(TOKENS, TOKENS[1:]):
            u = rng.choice(USERS)
            # start at the oracle rate so arbitrage gaps stay moderate
            rate = cfg.oracle[a] / cfg.oracle[b]
            v0 = _grid(min(Fraction(rng.randint(20, 40)), cfg.balance(u, a) / 2, cfg.balance(u, b) / rate / 2))
            v1 = v0 * rate
            cfg = amm_deposit(cfg, u, v0, a, v1, b)
    for u in USERS:
        for t in TOKENS:
            if rng.random() < 0.5:
                cfg = deposit(cfg, u, _grid(cfg.balance(u, t) * rng.randint(1, 3) / 4), t)
    return refresh_snapshot(cfg)


# ---------------------------------------------------------------- transactions


def _users_with(cfg: Configuration, t) -> list[str]:
    return [u for u in USERS if cfg.balance(u, t) > 0]


def _gen_dep(rng, cfg, params):
    # deposit a grid number of minted units so the minted supply stays on the
    # grid; otherwise exact denominators grow exponentially over long traces
    u, t = rng.choice(USERS), rng.choice(TOKENS)
    er = exchange_rate(cfg.lp, t)
    return Dep(u, _part(rng, cfg.balance(u, t) / er) * er, t)


def _gen_bor(rng, cfg, params):
    u, t = rng.choice(USERS), rng.choice(TOKENS)
    prices = pool_prices(cfg, params.lp)
    room = (collateral_value(cfg, u, prices) / params.lp.c_min - loan_value(cfg, u, prices)) / prices[t]
    cap = min(room, cfg.lp.fund(t))
    # borrowing right up to the limit sets up later liquidations
    return Bor(u, _grid(cap) if cap > 0 and rng.random() < 0.3 else _part(rng, cap), t)


def _gen_rep(rng, cfg, params):
    debtors = sorted(cfg.lp.loans)
    if not debtors:
        return None
    u = rng.choice(debtors)
    t = rng.choice(sorted(cfg.lp.loans[u], key=token_key))
    cap = min(cfg.lp.loan(u, t), cfg.balance(u, t))
    return Rep(u, _part(rng, cap, 5) if rng.random() < 0.8 else cap, t)


def _gen_rdm(rng, cfg, params):
    u, t = rng.choice(USERS), rng.choice(TOKENS)
    m = LpMinted(t)
    return Rdm(u, _part(rng, cfg.balance(u, m)), m)


def _gen_liq(rng, cfg, params):
    victims = liquidatable(cfg, params.lp)
    if not victims:
        return None
    b = rng.choice(victims)
    t = rng.choice(sorted(cfg.lp.loans[b], key=token_key))
    held = sorted((m for m in cfg.wallets.get(b, {}) if isinstance(m, LpMinted) and cfg.balance(b, m) > 0), key=token_key)
    payers = [u for u in _users_with(cfg, t) if u != b]
    if not held or not payers:
        return None
    m, l = rng.choice(held), rng.choice(payers)
    bound = min(max_liquidation(cfg, params.lp, b, t, m), cfg.balance(l, t))
    if bound <= 0:
        return None
    return Liq(l, b, _part(rng, bound, 5), t, m)


def _gen_px(rng, cfg, params):
    prices = dict(cfg.oracle)
    t = rng.choice(TOKENS)
    factor = rng.choice((Fraction(1, 2), Fraction(3, 4), Fraction(9, 10), Fraction(10, 9), Fraction(4, 3), Fraction(2)))
    prices[t] = min(Fraction(10), max(Fraction(1, 10), prices[t] * factor))
    return Px.of(prices)


def _gen_trf(rng, cfg, params):
    a, b, t = rng.choice(USERS), rng.choice(USERS), rng.choice(TOKENS)
    return Trf(a, b, _part(rng, cfg.balance(a, t)), t)


def _gen_mtrf(rng, cfg, params):
    a, b, t = rng.choice(USERS), rng.choice(USERS), LpMinted(rng.choice(TOKENS))
    return Mtrf(a, b, _part(rng, cfg.balance(a, t)), t)


def _gen_amm_dep(rng, cfg, params):
    u = rng.choice(USERS)
    a, b = sorted(rng.sample(TOKENS, 2), key=token_key)
    ps = cfg.amm.pairs.get((a, b))
    if ps is None or not ps.funded:
        return AmmDep(u, _part(rng, cfg.balance(u, a)), a, _part(rng, cfg.balance(u, b)), b)
    # largest ratio-respecting deposit the wallet covers
    cap = min(cfg.balance(u, a), cfg.balance(u, b) * ps.r0 / ps.r1)
    v0 = _part(rng, cap)
    v1 = v0 * ps.r1 / ps.r0
    if rng.random() < 0.05:
        v1 += 1
    return AmmDep(u, v0, a, v1, b)


def _gen_amm_swap(rng, cfg, params):
    if not cfg.amm.pairs:
        return None
    a, b = rng.choice(sorted(cfg.amm.pairs, key=lambda k: (k[0].name, k[1].name)))
    if rng.random() < 0.5:
        a, b = b, a
    u = rng.choice(USERS)
    return AmmSwap(u, a, b, _part(rng, cfg.balance(u, a)))


def _gen_amm_rdm(rng, cfg, params):
    if not cfg.amm.pairs:
        return None
    key = rng.choice(sorted(cfg.amm.pairs, key=lambda k: (k[0].name, k[1].name)))
    u = rng.choice(USERS)
    t = AmmMinted(*key)
    return AmmRdm(u, _part(rng, cfg.balance(u, t)), t)


def random_group(rng: random.Random, cfg: Configuration, params: Params, mutate: bool | None = None) -> AtomicGroup | None:
    """A flash-loan group; when ``mutate`` is true one part is broken on purpose.

    Mutations drop the repayment, pay a fee at or below the floor, borrow
    more than the pool holds, or repay before borrowing.
    """
    funded = [t for t in TOKENS if cfg.lp.fund(t) > 0]
    if not funded:
        return None
    if mutate is None:
        mutate = rng.random() < 0.3
    u, t = rng.choice(USERS), rng.choice(funded)
    fee = params.flash.c_fee * cfg.oracle[t]
    if rng.random() < 0.7 or cfg.lp.supply_of(t) == 0:
        v = _part(rng, cfg.lp.fund(t))
        body: list = []
        if rng.random() < 0.5:
            body = [Dep(u, v, t), Rdm(u, v / exchange_rate(cfg.lp, t), LpMinted(t))]
        borrow, repay = FBorrow(u, v, t), FRepay(u, v + fee + Fraction(1, GRID), t)
        if mutate:
            kind = rng.choice(("drop", "fee", "over", "order"))
            if kind == "drop":
                repay = None
            elif kind == "fee":
                repay = FRepay(u, v + fee / 2, t) if fee > 0 else FRepay(u, v - Fraction(1, GRID), t)
            elif kind == "over":
                borrow = FBorrow(u, cfg.lp.fund(t) + 1, t)
            else:
                return AtomicGroup(u, (repay, *body, borrow))
        txs = (borrow, *body) + ((repay,) if repay is not None else ())
        return AtomicGroup(u, txs)
    m = LpMinted(t)
    v = _part(rng, cfg.lp.supply_of(t))
    fee_token = rng.choice(TOKENS)
    fm = params.flash.c_fee * cfg.oracle[fee_token] + Fraction(1, GRID)
    repay = FRepayM(u, v, m, fm, fee_token)
    if mutate:
        kind = rng.choice(("drop", "fee", "amount"))
        if kind == "drop":
            return AtomicGroup(u, (FBorrowM(u, v, m),))
        if kind == "fee":
            repay = FRepayM(u, v, m, fm - Fraction(1, GRID), fee_token)
        else:
            repay = FRepayM(u, v / 2, m, fm, fee_token)
    return AtomicGroup(u, (FBorrowM(u, v, m), repay))


_GENERATORS: dict[str, Callable] = {
    "Dep": _gen_dep,
    "Bor": _gen_bor,
    "Rep": _gen_rep,
    "Rdm": _gen_rdm,
    "Liq": _gen_liq,
    "Px": _gen_px,
    "Trf": _gen_trf,
    "Mtrf": _gen_mtrf,
    "AmmDep": _gen_amm_dep,
    "AmmSwap": _gen_amm_swap,
    "AmmRdm": _gen_amm_rdm,
    "Group": lambda rng, cfg, params: random_group(rng, cfg, params),
}


def random_tx(rng: random.Random, cfg: Configuration, params: Params, profile: Profile, index: int = 0):
    names = [k for k, _ in profile.kinds]
    weights = [w for _, w in profile.kinds]
    for _ in range(8):
        kind = rng.choices(names, weights)[0]
        if kind == "Int":
            return Int(index)
        tx = _GENERATORS[kind](rng, cfg, params)
        if tx is not None:
            return tx
    return Int(index)


# ---------------------------------------------------------------- execution


def apply_item(cfg: Configuration, params: Params, item) -> Configuration:
    """Apply a top-level transaction or an atomic group (auto-announced)."""
    if isinstance(item, AtomicGroup):
        ns = announce(NetworkState(cfg, params), Authorization(item.signer, item))
        return execute_group(ns, item).cfg
    return step(cfg, params, item)


def _swap_should_succeed(cfg: Configuration, tx) -> bool:
    if not isinstance(tx, AmmSwap) or tx.token_in == tx.token_out:
        return False
    found = cfg.amm.find(tx.token_in, tx.token_out)
    return found is not None and found[1].funded and 0 < tx.amount_in <= cfg.balance(tx.user, tx.token_in)


def check_item(pre: Configuration, params: Params, item, checks: Sequence[str]) -> tuple[Configuration | None, list[str]]:
    """Run one item; return the post state (None if rejected) and violations."""
    try:
        post = apply_item(pre, params, item)
    except DefiError as exc:
        if _swap_should_succeed(pre, item):
            return None, [f"swap-validity: a finite swap was rejected: {exc}"]
        return None, []
    except Exception as exc:  # noqa: BLE001 - any other exception breaks totality
        return None, [f"totality: {type(exc).__name__}: {exc}"]
    out = []
    for name in checks:
        try:
            out.extend(CHECKS[name](pre, post, item, params))
        except Exception as exc:  # noqa: BLE001
            out.append(f"totality: check {name} raised {type(exc).__name__}: {exc}")
    return post, out


def _check_name(msg: str) -> str:
    return msg.split(":", 1)[0]


def replay_violations(initial: Configuration, params: Params, items: Sequence, checks: Sequence[str]) -> set[str]:
    cfg = initial
    found: set[str] = set()
    for item in items:
        post, vs = check_item(cfg, params, item, checks)
        found.update(_check_name(v) for v in vs)
        if post is not None:
            cfg = post
    return found


def shrink(initial: Configuration, params: Params, items: Sequence, check: str, checks: Sequence[str]) -> tuple:
    """Greedily drop steps while the trace still violates ``check``."""
    items = list(items)
    i = len(items) - 1
    while i >= 0:
        trial = items[:i] + items[i + 1 :]
        if check in replay_violations(initial, params, trial, checks):
            items = trial
        i -= 1
    return tuple(items)


@dataclass(frozen=True)
class TraceStep:
    pre: Configuration
    item: object
    post: Configuration | None
    violations: tuple[str, ...]


def random_trace(rng: random.Random, profile: Profile, steps: int, params: Params | None = None) -> Iterator[TraceStep]:
    params = profile.params() if params is None else params
    cfg = random_configuration(rng, profile)
    for i in range(steps):
        item = random_tx(rng, cfg, params, profile, i)
        post, vs = check_item(cfg, params, item, profile.checks)
        yield TraceStep(cfg, item, post, tuple(vs))
        if post is not None:
            cfg = post


def random_states(seed: int, count: int, profile: str = "lp", steps: int = 20) -> Iterator[Configuration]:
    """Reachable configurations, one per trace, after ``steps`` random steps."""
    prof = PROFILES[profile]
    for i in range(count):
        rng = random.Random(seed * 1_000_003 + i)
        cfg = None
        for st in random_trace(rng, prof, steps):
            cfg = st.post if st.post is not None else st.pre
        yield cfg if cfg is not None else random_configuration(rng, prof)


def fuzz(seed: int, steps: int, profile: str = "lp", traces: int = 1, shrink_violations: bool = True) -> FuzzReport:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    prof = PROFILES[profile]
    params = prof.params()
    report = FuzzReport(seed, profile, traces, steps)
    for k in range(traces):
        rng = random.Random(seed * 1_000_003 + k)
        items: list = []
        initial = None
        for i, st in enumerate(random_trace(rng, prof, steps, params)):
            if initial is None:
                initial = st.pre
            items.append(st.item)
            if st.post is None:
                report.rejected += 1
            else:
                report.accepted += 1
            for msg in st.violations:
                name = _check_name(msg)
                small = shrink(initial, params, items, name, prof.checks) if shrink_violations else tuple(items)
                report.violations.append(Violation(k, i, name, msg, small))
    return report


__all__ = [
    "FuzzReport",
    "PROFILES",
    "Profile",
    "TraceStep",
    "Violation",
    "apply_item",
    "check_item",
    "fuzz",
    "random_configuration",
    "random_group",
    "random_states",
    "random_trace",
    "random_tx",
    "replay_violations",
    "shrink",
]
