"""Attack-trace generators: price oracle, over-utilization, sandwich, arbitrage."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ..amm import arb_pairs, optimal_arb_input, swap_output
from ..engine import AmmSwap, Bor, Dep, Liq, Params, Px, Rdm, step
from ..errors import EmptyPair, InsufficientBalance, NoArbitrage, NoVictimLoan, PreconditionUnmet
from ..lending import exchange_rate, pool_prices
from ..state import Configuration, Free, LpMinted, token_key
from .metrics import net_worth

ZERO = Fraction(0)
DEFAULT_EPSILON = Fraction(1, 10**6)
LABELS = ("PriceOracle", "OverUtilization", "Sandwich", "Arbitrage", "RepayCensorship")


@dataclass(frozen=True)
class AttackTrace:
    """A generated attack and its outcome.

    ``measure`` says how the two gains are denominated: ``"value"`` for
    oracle-valued net worth, otherwise the name of the token counted.
    """

    label: str
    steps: tuple
    attacker_gain: Fraction
    victim_loss: Fraction
    initial: Configuration = field(default_factory=Configuration, repr=False)
    final: Configuration = field(default_factory=Configuration, repr=False)
    measure: str = "value"
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"unknown attack label {self.label!r}")


def run_steps(cfg: Configuration, params: Params, steps: Sequence) -> Configuration:
    """Apply top-level transactions in order, refreshing the AMM snapshot after each."""
    for tx in steps:
        cfg = step(cfg, params, tx)
    return cfg


def replay_trace(trace: AttackTrace, params: Params) -> Configuration:
    return run_steps(trace.initial, params, trace.steps)


# ---------------------------------------------------------------- price oracle


def gen_price_oracle_attack(
    cfg: Configuration, params: Params, attacker: str, victim: str, epsilon: Fraction = DEFAULT_EPSILON
) -> AttackTrace:
    """Crash the price of the victim's collateral, seize all of it cheaply, restore prices.

    Collateral whose underlying is also one of the victim's loan tokens is
    left alone, since lowering that price lowers the loan value too.
    """
    if params.lp.oracle_source != "external":
        raise PreconditionUnmet("price updates only move collateralization under the external oracle")
    loans = {t: a for t, a in cfg.lp.loans.get(victim, {}).items() if a > 0}
    if not loans:
        raise NoVictimLoan(f"{victim} has no outstanding loan")
    wallet = cfg.wallets.get(victim, {})
    collateral = sorted(
        (t for t, a in wallet.items() if isinstance(t, LpMinted) and a > 0 and t.underlying not in loans),
        key=token_key,
    )
    if not collateral:
        return AttackTrace("PriceOracle", (), ZERO, ZERO, cfg, cfg, notes=(f"{victim} holds no usable minted collateral",))

    true_prices = dict(cfg.oracle)
    crashed = dict(true_prices)
    for m in collateral:
        crashed[m.underlying] = epsilon
    steps: list = [Px.of(crashed)]
    cur = run_steps(cfg, params, steps)

    repaid_left = dict(loans)
    for m in collateral:
        units = cur.balance(victim, m)
        # repaying in the loan token with the most attacker cover keeps the repayment smallest
        for t in sorted(repaid_left, key=lambda t: (-cur.balance(attacker, t), t.name)):
            v = units * crashed[m.underlying] / (crashed[t] * params.lp.r_liq)
            if v < repaid_left[t] and v <= cur.balance(attacker, t):
                tx = Liq(attacker, victim, v, t, m)
                cur = step(cur, params, tx)
                steps.append(tx)
                repaid_left[t] -= v
                break
        else:
            raise InsufficientBalance(f"{attacker} cannot cover the repayment for {units} {m}")
    restore = Px.of(true_prices)
    steps.append(restore)
    final = step(cur, params, restore)
    gain = net_worth(final, attacker) - net_worth(cfg, attacker)
    loss = net_worth(cfg, victim) - net_worth(final, victim)
    return AttackTrace("PriceOracle", tuple(steps), gain, loss, cfg, final)


# ---------------------------------------------------------------- over-utilization


def gen_over_utilization_attack(
    cfg: Configuration,
    params: Params,
    lender: str = "A",
    borrower: str = "B",
    honest: str | None = "C",
    target: Free = Free("τ0"),
    collateral: Free = Free("τ1"),
) -> AttackTrace:
    """Colluding lender and borrower drain ``target`` from the pool after an honest deposit.

    The lender deposits its whole ``target`` balance and the borrower its whole
    ``collateral`` balance. The borrower then borrows exactly what the honest
    user will deposit. After that deposit the lender redeems everything,
    leaving no ``target`` funds. Without an honest depositor the borrower
    takes the whole deposit instead. ``victim_loss`` is the value of the
    honest deposit locked in the pool.
    """
    a = cfg.balance(lender, target)
    c = cfg.balance(honest, target) if honest is not None else ZERO
    k = cfg.balance(borrower, collateral)
    if a <= 0 or k <= 0:
        raise PreconditionUnmet(f"{lender} needs {target} and {borrower} needs {collateral}")
    if cfg.lp.fund(target) or cfg.lp.supply_of(target) or cfg.lp.loans:
        raise PreconditionUnmet(f"the pool must start without {target} activity or loans")
    b = c if c > 0 else a
    if b > a:
        raise PreconditionUnmet(f"honest deposit {c} exceeds the lender's {a}")
    steps: list = [Dep(lender, a, target), Dep(borrower, k, collateral), Bor(borrower, b, target)]
    if c > 0:
        steps += [Dep(honest, c, target), Rdm(lender, a, LpMinted(target))]
    try:
        final = run_steps(cfg, params, steps)
    except Exception as exc:
        raise PreconditionUnmet(f"attack sequence is not executable: {exc}") from exc
    prices = pool_prices(final, params.lp)
    locked = final.balance(honest, LpMinted(target)) * exchange_rate(final.lp, target) * prices[target] if c > 0 else ZERO
    gain = sum((net_worth(final, u) - net_worth(cfg, u) for u in (lender, borrower)), ZERO)
    return AttackTrace("OverUtilization", tuple(steps), gain, locked, cfg, final)


# ---------------------------------------------------------------- sandwich


def sandwich_gain(r_in: Fraction, r_out: Fraction, front: Fraction, victim: Fraction, fee: Fraction = ZERO) -> Fraction:
    """Attacker's net input-token gain from front-running ``victim`` with ``front``."""
    got = swap_output(r_in, r_out, front, fee)
    r_in, r_out = r_in + front, r_out - got
    if victim > 0:
        vout = swap_output(r_in, r_out, victim, fee)
        r_in, r_out = r_in + victim, r_out - vout
    back = swap_output(r_out, r_in, got, fee)
    return back - front


def gen_sandwich_attack(
    cfg: Configuration, params: Params, attacker: str, victim_swap: AmmSwap, probe_amount: Fraction, grid: int = 20
) -> AttackTrace:
    """Bracket ``victim_swap`` with a same-direction swap and its exact reversal.

    The front-run size is the best of ``probe_amount * k / grid`` for
    ``k = 1..grid``, capped by the attacker's balance. A zero probe gives the
    trace with only the victim's swap and zero gain.
    """
    t_in, t_out = victim_swap.token_in, victim_swap.token_out
    found = cfg.amm.find(t_in, t_out)
    if found is None or not found[1].funded:
        raise EmptyPair(f"no funded pair for {t_in} and {t_out}")
    (a, _), ps = found
    r_in, r_out = (ps.r0, ps.r1) if a == t_in else (ps.r1, ps.r0)
    fee = params.swap.fee
    v = victim_swap.amount_in
    cap = min(probe_amount, cfg.balance(attacker, t_in))
    victim_steps = [victim_swap] if v > 0 else []
    if cap <= 0:
        final = run_steps(cfg, params, victim_steps)
        return AttackTrace("Sandwich", tuple(victim_steps), ZERO, ZERO, cfg, final, measure=str(t_in))
    best_x, best_gain = None, None
    for k in range(1, grid + 1):
        x = cap * k / grid
        g = sandwich_gain(r_in, r_out, x, v, fee)
        if best_gain is None or g > best_gain:
            best_x, best_gain = x, g
    front = AmmSwap(attacker, t_in, t_out, best_x)
    mid = run_steps(cfg, params, [front])
    got = mid.balance(attacker, t_out) - cfg.balance(attacker, t_out)
    mid = run_steps(mid, params, victim_steps)
    back = AmmSwap(attacker, t_out, t_in, got)
    final = run_steps(mid, params, [back])
    steps = (front, *victim_steps, back)
    gain = final.balance(attacker, t_in) - cfg.balance(attacker, t_in)
    honest_out = swap_output(r_in, r_out, v, fee) if v > 0 else ZERO
    actual_out = final.balance(victim_swap.user, t_out) - cfg.balance(victim_swap.user, t_out)
    if victim_swap.user == attacker:
        actual_out = honest_out
    return AttackTrace("Sandwich", steps, gain, honest_out - actual_out, cfg, final, measure=str(t_in))


# ---------------------------------------------------------------- arbitrage


def gen_arbitrage(cfg: Configuration, params: Params, user: str, denom: int = 10**6) -> AttackTrace:
    """One swap per mispriced pair toward the oracle rate, as an explicit trace."""
    pairs = arb_pairs(cfg)
    if not pairs:
        raise NoArbitrage("every funded pair agrees with the oracle")
    steps = []
    cur = cfg
    for a, b in pairs:
        ps = cur.amm.pairs[(a, b)]
        if ps.r1 * cur.oracle[b] > ps.r0 * cur.oracle[a]:
            t_in, t_out, r_in, r_out = a, b, ps.r0, ps.r1
        else:
            t_in, t_out, r_in, r_out = b, a, ps.r1, ps.r0
        x = min(optimal_arb_input(r_in, r_out, cur.oracle[t_in], cur.oracle[t_out], params.swap.fee, denom), cur.balance(user, t_in))
        if x > 0:
            tx = AmmSwap(user, t_in, t_out, x)
            cur = step(cur, params, tx)
            steps.append(tx)
    if not steps:
        raise NoArbitrage("no profitable swap is affordable")
    gain = net_worth(cur, user) - net_worth(cfg, user)
    return AttackTrace("Arbitrage", tuple(steps), gain, ZERO, cfg, cur)


__all__ = [
    "AttackTrace",
    "DEFAULT_EPSILON",
    "gen_arbitrage",
    "gen_over_utilization_attack",
    "gen_price_oracle_attack",
    "gen_sandwich_attack",
    "replay_trace",
    "run_steps",
    "sandwich_gain",
]
