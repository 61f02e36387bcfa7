"""Transactions, authorizations, atomic groups, flash loans and scheduling.

A ``NetworkState`` pairs a configuration with the set of announced
authorizations. User transactions run only under a matching announced
authorization whose predicate holds; interest accrual and price updates are
environment steps and need none.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from . import amm, lending
from .amm import SwapParams, refresh_snapshot
from .errors import (
    AtomicityFailure,
    DefiError,
    FlashObligationUnmet,
    FlashOutsideGroup,
    InsufficientBalance,
    InsufficientFlashFee,
    InsufficientPoolFunds,
    MalformedAuthorization,
    NonPositiveAmount,
    NotAuthorized,
    PredicateFalse,
    WrongTokenClass,
)
from .ledger import credit, debit, set_prices, transfer
from .lending import LpParams
from .state import Configuration, Free, LpMinted, LpState, Token, fmt

ZERO = Fraction(0)


@dataclass(frozen=True)
class FlashParams:
    c_fee: Fraction = ZERO

    def __post_init__(self) -> None:
        if self.c_fee < 0:
            raise ValueError(f"flash fee must be nonnegative, got {fmt(self.c_fee)}")


@dataclass(frozen=True)
class Params:
    lp: LpParams = field(default_factory=LpParams)
    swap: SwapParams = field(default_factory=SwapParams)
    flash: FlashParams = field(default_factory=FlashParams)


# ---------------------------------------------------------------- transactions


@dataclass(frozen=True)
class Trf:
    sender: str
    receiver: str
    amount: Fraction
    token: Token

    @property
    def signer(self) -> str:
        return self.sender


@dataclass(frozen=True)
class Px:
    """Oracle update; ``prices`` is a sorted tuple of ``(token, price)`` pairs."""

    prices: tuple[tuple[Free, Fraction], ...]
    signer = None

    @classmethod
    def of(cls, prices: Mapping[Free, Fraction]) -> Px:
        return cls(tuple(sorted(prices.items(), key=lambda kv: kv[0].name)))


@dataclass(frozen=True)
class Dep:
    user: str
    amount: Fraction
    token: Token

    @property
    def signer(self) -> str:
        return self.user


@dataclass(frozen=True)
class Bor(Dep):
    pass


@dataclass(frozen=True)
class Rep(Dep):
    pass


@dataclass(frozen=True)
class Rdm(Dep):
    pass


@dataclass(frozen=True)
class Int:
    step: int = 0
    signer = None


@dataclass(frozen=True)
class Liq:
    liquidator: str
    borrower: str
    amount: Fraction
    token: Token
    seized_token: Token
    seized: Fraction | None = None

    @property
    def signer(self) -> str:
        return self.liquidator


@dataclass(frozen=True)
class Mtrf(Trf):
    pass


@dataclass(frozen=True)
class AmmDep:
    user: str
    v0: Fraction
    t0: Token
    v1: Fraction
    t1: Token

    @property
    def signer(self) -> str:
        return self.user


@dataclass(frozen=True)
class AmmSwap:
    user: str
    token_in: Token
    token_out: Token
    amount_in: Fraction

    @property
    def signer(self) -> str:
        return self.user


@dataclass(frozen=True)
class AmmRdm(Dep):
    pass


@dataclass(frozen=True)
class FBorrow(Dep):
    pass


@dataclass(frozen=True)
class FRepay(Dep):
    pass


@dataclass(frozen=True)
class FBorrowM(Dep):
    pass


@dataclass(frozen=True)
class FRepayM:
    user: str
    amount: Fraction
    token: Token
    fee: Fraction
    fee_token: Token

    @property
    def signer(self) -> str:
        return self.user


Transaction = Union[Trf, Px, Dep, Bor, Int, Rep, Rdm, Liq, Mtrf, AmmDep, AmmSwap, AmmRdm, FBorrow, FRepay, FBorrowM, FRepayM]
FLASH_TYPES = (FBorrow, FRepay, FBorrowM, FRepayM)
ENV_TYPES = (Int, Px)


def label(tx: Transaction) -> str:
    return type(tx).__name__


# ---------------------------------------------------------------- predicates
# A predicate is a nested tuple:
#   ("true",) | ("not", p) | ("and", p, ...) | ("or", p, ...)
#   (op, term, term) with op in < <= = >= >
# and a term is a Fraction or ("price", t) | ("coll", user) | ("util", t) | ("exch", t0, t1).

TRUE = ("true",)
_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def eval_term(term, cfg: Configuration, params: Params):
    if isinstance(term, (int, Fraction)):
        return Fraction(term)
    kind = term[0]
    if kind == "price":
        return cfg.oracle[term[1]]
    if kind == "coll":
        return lending.collateralization(cfg, term[1], params.lp)
    if kind == "util":
        return lending.utilization(cfg.lp, term[1])
    if kind == "exch":
        return amm.exch_rate(cfg.amm, term[1], term[2])
    raise MalformedAuthorization(f"unknown predicate term {term!r}")


def eval_predicate(pred, cfg: Configuration, params: Params) -> bool:
    op = pred[0]
    if op == "true":
        return True
    if op == "not":
        return not eval_predicate(pred[1], cfg, params)
    if op == "and":
        return all(eval_predicate(p, cfg, params) for p in pred[1:])
    if op == "or":
        return any(eval_predicate(p, cfg, params) for p in pred[1:])
    if op in _CMP:
        try:
            return _CMP[op](eval_term(pred[1], cfg, params), eval_term(pred[2], cfg, params))
        except KeyError:
            return False
        except DefiError as exc:
            if isinstance(exc, MalformedAuthorization):
                raise
            return False
    raise MalformedAuthorization(f"unknown predicate operator {op!r}")


def _check_predicate_shape(pred) -> None:
    if not isinstance(pred, tuple) or not pred:
        raise MalformedAuthorization(f"predicate must be a nonempty tuple, got {pred!r}")
    op = pred[0]
    if op == "true":
        return
    if op == "not" and len(pred) == 2:
        _check_predicate_shape(pred[1])
        return
    if op in ("and", "or"):
        for p in pred[1:]:
            _check_predicate_shape(p)
        return
    if op in _CMP and len(pred) == 3:
        for term in pred[1:]:
            if isinstance(term, (int, Fraction)):
                continue
            if not isinstance(term, tuple) or term[0] not in ("price", "coll", "util", "exch"):
                raise MalformedAuthorization(f"bad predicate term {term!r}")
        return
    raise MalformedAuthorization(f"bad predicate {pred!r}")


# ---------------------------------------------------------------- authorizations


@dataclass(frozen=True)
class AtomicGroup:
    signer: str
    txs: tuple


@dataclass(frozen=True)
class Authorization:
    signer: str
    payload: Union[Transaction, AtomicGroup]
    predicate: tuple = TRUE
    multi_use: bool = False


@dataclass(frozen=True)
class NetworkState:
    """Configuration plus shared knowledge.

    ``consumed`` holds single-use authorizations already spent; ``notes``
    collects messages about waived premises.
    """

    cfg: Configuration
    params: Params = field(default_factory=Params)
    knowledge: frozenset = frozenset()
    consumed: frozenset = frozenset()
    notes: tuple = ()


def validate_authorization(auth: Authorization) -> None:
    _check_predicate_shape(auth.predicate)
    txs = auth.payload.txs if isinstance(auth.payload, AtomicGroup) else (auth.payload,)
    if isinstance(auth.payload, AtomicGroup):
        if not txs:
            raise MalformedAuthorization("atomic group is empty")
        if auth.payload.signer != auth.signer:
            raise MalformedAuthorization("group signer differs from authorization signer")
    for tx in txs:
        if isinstance(tx, ENV_TYPES):
            raise MalformedAuthorization(f"{label(tx)} is an environment step and cannot be authorized")
        if tx.signer != auth.signer:
            raise MalformedAuthorization(f"{label(tx)} is signed by {tx.signer}, not {auth.signer}")


def announce(ns: NetworkState, auth: Authorization) -> NetworkState:
    validate_authorization(auth)
    if auth in ns.knowledge:
        return ns
    return replace(ns, knowledge=ns.knowledge | {auth})


# ---------------------------------------------------------------- rule dispatch


def _flash_borrow(cfg: Configuration, user: str, v: Fraction, t: Token) -> Configuration:
    if not isinstance(t, Free):
        raise WrongTokenClass(f"flash borrow takes a free token, got {t}")
    if v <= 0:
        raise NonPositiveAmount(f"flash amount must be positive, got {fmt(v)}")
    if cfg.lp.fund(t) < v:
        raise InsufficientPoolFunds(f"pool holds {fmt(cfg.lp.fund(t))} {t}, flash borrow asks {fmt(v)}")
    cfg = cfg.with_(lp=lending._with_fund(cfg.lp, t, -v))
    return credit(cfg, user, v, t)


def _flash_repay(cfg: Configuration, user: str, v: Fraction, t: Token) -> Configuration:
    if not isinstance(t, Free):
        raise WrongTokenClass(f"flash repay takes a free token, got {t}")
    if v <= 0:
        raise NonPositiveAmount(f"flash amount must be positive, got {fmt(v)}")
    cfg = debit(cfg, user, v, t)
    return cfg.with_(lp=lending._with_fund(cfg.lp, t, v))


def _flash_borrow_m(cfg: Configuration, user: str, v: Fraction, t: Token) -> Configuration:
    if not isinstance(t, LpMinted) or t.underlying not in cfg.lp.minted:
        raise WrongTokenClass(f"minted flash borrow takes a pool-minted token, got {t}")
    if v <= 0:
        raise NonPositiveAmount(f"flash amount must be positive, got {fmt(v)}")
    cfg = cfg.with_(lp=lending._with_minted(cfg.lp, t.underlying, v))
    return credit(cfg, user, v, t)


def _flash_repay_m(cfg: Configuration, flash: FlashParams, tx: FRepayM) -> Configuration:
    t, fee_token = tx.token, tx.fee_token
    if not isinstance(t, LpMinted) or t.underlying not in cfg.lp.minted:
        raise WrongTokenClass(f"minted flash repay takes a pool-minted token, got {t}")
    if not isinstance(fee_token, Free):
        raise WrongTokenClass(f"flash fee must be paid in a free token, got {fee_token}")
    if tx.amount <= 0:
        raise NonPositiveAmount(f"flash amount must be positive, got {fmt(tx.amount)}")
    if cfg.balance(tx.user, t) < tx.amount:
        raise InsufficientBalance(f"{tx.user} holds {fmt(cfg.balance(tx.user, t))} {t}, repays {fmt(tx.amount)}")
    floor = flash.c_fee * cfg.oracle[fee_token]
    if not tx.fee > floor:
        raise InsufficientFlashFee(f"flash fee {fmt(tx.fee)} {fee_token} must exceed {fmt(floor)}")
    if cfg.balance(tx.user, fee_token) < tx.fee:
        raise InsufficientBalance(f"{tx.user} holds {fmt(cfg.balance(tx.user, fee_token))} {fee_token}, fee {fmt(tx.fee)}")
    cfg = debit(cfg, tx.user, tx.amount, t)
    cfg = cfg.with_(lp=lending._with_minted(cfg.lp, t.underlying, -tx.amount))
    # the fee goes to the pool so free-token supply is conserved
    cfg = debit(cfg, tx.user, tx.fee, fee_token)
    return cfg.with_(lp=lending._with_fund(cfg.lp, fee_token, tx.fee))


def apply_tx(
    cfg: Configuration,
    params: Params,
    tx: Transaction,
    in_group: bool = False,
    notes: list[str] | None = None,
) -> Configuration:
    """Apply the rule for ``tx`` to ``cfg``; raise on a failed premise."""
    if isinstance(tx, FLASH_TYPES) and not in_group:
        raise FlashOutsideGroup(f"{label(tx)} must run inside an atomic group")
    lp = params.lp
    if isinstance(tx, Mtrf):
        return lending.transfer_minted(cfg, lp, tx.sender, tx.receiver, tx.amount, tx.token)
    if isinstance(tx, Trf):
        return transfer(cfg, tx.sender, tx.receiver, tx.amount, tx.token)
    if isinstance(tx, Px):
        return set_prices(cfg, dict(tx.prices))
    if isinstance(tx, Int):
        return lending.accrue_interest(cfg, lp, tx.step)
    if isinstance(tx, Liq):
        return lending.liquidate(
            cfg, lp, tx.liquidator, tx.borrower, tx.amount, tx.token, tx.seized_token, tx.seized, notes=notes
        )[0]
    if isinstance(tx, AmmDep):
        return amm.amm_deposit(cfg, tx.user, tx.v0, tx.t0, tx.v1, tx.t1)
    if isinstance(tx, AmmSwap):
        return amm.amm_swap(cfg, params.swap, tx.user, tx.token_in, tx.token_out, tx.amount_in)[0]
    if isinstance(tx, FRepayM):
        return _flash_repay_m(cfg, params.flash, tx)
    # the remaining labels share the (user, amount, token) shape; test subclasses first
    if isinstance(tx, Bor):
        return lending.borrow(cfg, lp, tx.user, tx.amount, tx.token)
    if isinstance(tx, Rep):
        return lending.repay(cfg, tx.user, tx.amount, tx.token)
    if isinstance(tx, Rdm):
        return lending.redeem(cfg, lp, tx.user, tx.amount, tx.token)
    if isinstance(tx, AmmRdm):
        return amm.amm_redeem(cfg, tx.user, tx.amount, tx.token)[0]
    if isinstance(tx, FBorrow):
        return _flash_borrow(cfg, tx.user, tx.amount, tx.token)
    if isinstance(tx, FRepay):
        return _flash_repay(cfg, tx.user, tx.amount, tx.token)
    if isinstance(tx, FBorrowM):
        return _flash_borrow_m(cfg, tx.user, tx.amount, tx.token)
    if isinstance(tx, Dep):
        return lending.deposit(cfg, tx.user, tx.amount, tx.token)
    raise TypeError(f"unknown transaction {tx!r}")


def step(cfg: Configuration, params: Params, tx: Transaction, notes: list[str] | None = None) -> Configuration:
    """Apply a standalone transaction and refresh the full-state snapshot."""
    return refresh_snapshot(apply_tx(cfg, params, tx, notes=notes))


# ---------------------------------------------------------------- flash obligations


@dataclass(frozen=True)
class FlashViolation:
    kind: str  # "unmatched", "short-repay", "amount-mismatch", "low-fee"
    index: int
    token: Token
    detail: str


def validate_flash_obligations(
    txs: Sequence[Transaction], flash: FlashParams, prices: Mapping[Free, Fraction]
) -> FlashViolation | None:
    """Check every flash borrow in a group trace is repaid later in the trace.

    Matching is first-unmatched per token: a repay settles the oldest open
    borrow of the same token. A free-token repay must exceed the borrow by at
    least ``c_fee * p(t)``; a minted repay must return exactly the borrowed
    amount with a fee above ``c_fee * p(fee token)``.
    """
    open_free: dict[Token, list[tuple[int, Fraction]]] = {}
    open_minted: dict[Token, list[tuple[int, Fraction]]] = {}
    for i, tx in enumerate(txs):
        if isinstance(tx, FBorrow):
            open_free.setdefault(tx.token, []).append((i, tx.amount))
        elif isinstance(tx, FRepay):
            pending = open_free.get(tx.token)
            if pending:
                j, v = pending.pop(0)
                need = flash.c_fee * prices[tx.token]
                if tx.amount - v < need:
                    return FlashViolation("short-repay", i, tx.token, f"repaid {fmt(tx.amount)} for {fmt(v)} borrowed at step {j}, fee floor {fmt(need)}")
        elif isinstance(tx, FBorrowM):
            open_minted.setdefault(tx.token, []).append((i, tx.amount))
        elif isinstance(tx, FRepayM):
            pending = open_minted.get(tx.token)
            if pending:
                j, v = pending.pop(0)
                if tx.amount != v:
                    return FlashViolation("amount-mismatch", i, tx.token, f"repaid {fmt(tx.amount)} for {fmt(v)} borrowed at step {j}")
                floor = flash.c_fee * prices[tx.fee_token]
                if not tx.fee > floor:
                    return FlashViolation("low-fee", i, tx.token, f"fee {fmt(tx.fee)} does not exceed {fmt(floor)}")
    for book in (open_free, open_minted):
        for t, pending in book.items():
            if pending:
                j, v = pending[0]
                return FlashViolation("unmatched", j, t, f"borrow of {fmt(v)} {t} at step {j} is never repaid")
    return None


# ---------------------------------------------------------------- execution


def _find_auth(ns: NetworkState, payload) -> Authorization:
    candidates = sorted(
        (a for a in ns.knowledge if a.payload == payload and (a.multi_use or a not in ns.consumed)),
        key=repr,
    )
    if not candidates:
        raise NotAuthorized(f"no announced authorization for {payload!r}")
    for auth in candidates:
        if eval_predicate(auth.predicate, ns.cfg, ns.params):
            return auth
    raise PredicateFalse(f"authorization predicate is false for {payload!r}")


def _consume(ns: NetworkState, auth: Authorization | None) -> frozenset:
    if auth is None or auth.multi_use:
        return ns.consumed
    return ns.consumed | {auth}


def execute_tx(ns: NetworkState, tx: Transaction) -> NetworkState:
    """Run one transaction under an announced authorization (none needed for environment steps)."""
    auth = None if isinstance(tx, ENV_TYPES) else _find_auth(ns, tx)
    notes: list[str] = []
    cfg = step(ns.cfg, ns.params, tx, notes)
    return replace(ns, cfg=cfg, consumed=_consume(ns, auth), notes=ns.notes + tuple(notes))


def execute_group(ns: NetworkState, group: AtomicGroup) -> NetworkState:
    """Run a group all-or-nothing; on failure the input state is left as is.

    The snapshot is frozen at entry, so pool valuations that read it see the
    entry AMM rates throughout. It is refreshed once the group commits.
    """
    auth = _find_auth(ns, group)
    entry = refresh_snapshot(ns.cfg)
    cfg = entry
    notes: list[str] = []
    for i, tx in enumerate(group.txs):
        try:
            cfg = apply_tx(cfg, ns.params, tx, in_group=True, notes=notes)
        except DefiError as exc:
            raise AtomicityFailure(i, exc) from exc
    violation = validate_flash_obligations(group.txs, ns.params.flash, entry.oracle)
    if violation is not None:
        raise FlashObligationUnmet(violation)
    return replace(ns, cfg=refresh_snapshot(cfg), consumed=_consume(ns, auth), notes=ns.notes + tuple(notes))


def group_substates(ns: NetworkState, group: AtomicGroup) -> list[Configuration]:
    """Configurations after each step of a group, without committing (for inspection)."""
    cfg = refresh_snapshot(ns.cfg)
    out = []
    for tx in group.txs:
        cfg = apply_tx(cfg, ns.params, tx, in_group=True)
        out.append(cfg)
    return out


# ---------------------------------------------------------------- scheduling


@dataclass(frozen=True)
class Fifo:
    pass


@dataclass(frozen=True)
class Reorder:
    order: tuple[int, ...]


@dataclass(frozen=True)
class Drop:
    indices: frozenset


@dataclass(frozen=True)
class Sandwich:
    victim: int
    front: tuple = ()
    back: tuple = ()


OrderingPolicy = Union[Fifo, Reorder, Drop, Sandwich]
Schedulable = Union[Authorization, Transaction]


@dataclass(frozen=True)
class ScheduleEntry:
    item: Schedulable
    ok: bool
    error: str | None = None


@dataclass
class ScheduleResult:
    states: list[NetworkState]
    log: list[ScheduleEntry]
    worth_delta: dict[str, Fraction]

    @property
    def final(self) -> NetworkState:
        return self.states[-1]


def order_items(policy: OrderingPolicy, items: Sequence[Schedulable]) -> list[Schedulable]:
    items = list(items)
    if isinstance(policy, Fifo):
        return items
    if isinstance(policy, Reorder):
        if sorted(policy.order) != list(range(len(items))):
            raise ValueError("reorder must be a permutation of the announced list")
        return [items[i] for i in policy.order]
    if isinstance(policy, Drop):
        return [x for i, x in enumerate(items) if i not in policy.indices]
    if isinstance(policy, Sandwich):
        v = policy.victim
        return items[:v] + list(policy.front) + [items[v]] + list(policy.back) + items[v + 1 :]
    raise TypeError(f"unknown policy {policy!r}")


def run_item(ns: NetworkState, item: Schedulable) -> NetworkState:
    if isinstance(item, Authorization):
        ns = announce(ns, item)
        if isinstance(item.payload, AtomicGroup):
            return execute_group(ns, item.payload)
        return execute_tx(ns, item.payload)
    return execute_tx(ns, item)


def schedule(ns: NetworkState, policy: OrderingPolicy, announced: Iterable[Schedulable]) -> ScheduleResult:
    """Execute items in the order chosen by ``policy``; failures are logged and skipped."""
    from .analysis.metrics import net_worth

    start = ns
    states = [ns]
    log: list[ScheduleEntry] = []
    for item in order_items(policy, list(announced)):
        try:
            ns = run_item(ns, item)
            log.append(ScheduleEntry(item, True))
        except DefiError as exc:
            log.append(ScheduleEntry(item, False, f"{exc.kind}: {exc}"))
        states.append(ns)
    users = sorted(set(start.cfg.users()) | set(ns.cfg.users()))
    # value both ends at the final prices so oracle moves do not count as gains
    end_prices = ns.cfg.oracle
    delta = {
        u: net_worth(ns.cfg, u) - net_worth(start.cfg.with_(oracle=end_prices), u)
        for u in users
    }
    return ScheduleResult(states, log, delta)
