"""Constant-product automated market maker over ordered token pairs."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import isqrt

from .errors import (
    EmptyPair,
    InsufficientBalance,
    NoArbitrage,
    NonPositiveAmount,
    RatioMismatch,
    ReversedPair,
    SameToken,
    WrongTokenClass,
)
from .ledger import credit, debit
from .state import AmmMinted, AmmState, Configuration, Free, Pair, PairState, Token, fmt

ZERO = Fraction(0)


@dataclass(frozen=True)
class SwapParams:
    fee: Fraction = ZERO

    def __post_init__(self) -> None:
        if not (0 <= self.fee < 1):
            raise ValueError(f"swap fee must lie in [0, 1), got {fmt(self.fee)}")


def _free(t: Token) -> Free:
    if not isinstance(t, Free):
        raise WrongTokenClass(f"AMM pairs hold free tokens only, got {t}")
    return t


def _set_pair(cfg: Configuration, key: Pair, ps: PairState) -> Configuration:
    pairs = dict(cfg.amm.pairs)
    pairs[key] = ps
    return cfg.with_(amm=AmmState(pairs))


def live_rates(amm: AmmState) -> dict[Pair, Fraction]:
    """``r1 / r0`` for every funded pair, keyed by its stored orientation."""
    return {k: ps.r1 / ps.r0 for k, ps in amm.pairs.items() if ps.funded}


def refresh_snapshot(cfg: Configuration) -> Configuration:
    """Record the live AMM rates as the most recent full-state rates."""
    rates = live_rates(cfg.amm)
    if rates == dict(cfg.snapshot):
        return cfg
    return cfg.with_(snapshot=rates)


def pair_exchange_rate(ps: PairState) -> tuple[Fraction, Fraction]:
    """Reserve units per pair-minted unit, ``(r0/s, r1/s)``; ``(1, 1)`` when nothing is minted."""
    if ps.supply == 0:
        return (Fraction(1), Fraction(1))
    return (ps.r0 / ps.supply, ps.r1 / ps.supply)


def amm_deposit(cfg: Configuration, user: str, v0: Fraction, t0: Token, v1: Fraction, t1: Token) -> Configuration:
    t0, t1 = _free(t0), _free(t1)
    if t0 == t1:
        raise SameToken(f"pair needs two distinct tokens, got {t0} twice", premise=3)
    if (t1, t0) in cfg.amm.pairs:
        raise ReversedPair(f"pair is registered as ({t1}, {t0})")
    if v0 <= 0 or v1 <= 0:
        raise NonPositiveAmount(f"both deposit amounts must be positive, got ({fmt(v0)}, {fmt(v1)})", premise=2)
    ps = cfg.amm.pairs.get((t0, t1))
    if ps is not None and ps.funded and ps.supply > 0:
        if v1 * ps.r0 != v0 * ps.r1:
            raise RatioMismatch(f"deposit ratio {fmt(v1)}/{fmt(v0)} differs from reserve ratio {fmt(ps.r1)}/{fmt(ps.r0)}", premise=1)
        minted = v0 * ps.supply / ps.r0
        new = PairState(ps.r0 + v0, ps.r1 + v1, ps.supply + minted)
    else:
        minted = v0
        new = PairState(v0, v1, v0)
    cfg = debit(cfg, user, v0, t0, premise=2)
    cfg = debit(cfg, user, v1, t1, premise=2)
    cfg = credit(cfg, user, minted, AmmMinted(t0, t1))
    return _set_pair(cfg, (t0, t1), new)


def swap_output(r_in: Fraction, r_out: Fraction, v_in: Fraction, fee: Fraction = ZERO) -> Fraction:
    """Output of a swap; the fee share of the input accrues to the input reserve first."""
    return r_out * (1 - fee) * v_in / (r_in + v_in)


def _locate(cfg: Configuration, a: Free, b: Free) -> tuple[Pair, PairState]:
    found = cfg.amm.find(a, b)
    if found is None:
        raise EmptyPair(f"no pair for {a} and {b}", premise=1)
    return found


def amm_swap(
    cfg: Configuration, params: SwapParams, user: str, token_in: Token, token_out: Token, v_in: Fraction
) -> tuple[Configuration, Fraction]:
    token_in, token_out = _free(token_in), _free(token_out)
    if token_in == token_out:
        raise SameToken(f"cannot swap {token_in} for itself")
    key, ps = _locate(cfg, token_in, token_out)
    if not ps.funded:
        raise EmptyPair(f"pair {key[0]}/{key[1]} has no reserves", premise=1)
    if v_in <= 0:
        raise NonPositiveAmount(f"swap input must be positive, got {fmt(v_in)}", premise=2)
    if cfg.balance(user, token_in) < v_in:
        raise InsufficientBalance(f"{user} holds {fmt(cfg.balance(user, token_in))} {token_in}, swaps {fmt(v_in)}", premise=2)
    forward = key[0] == token_in
    r_in, r_out = (ps.r0, ps.r1) if forward else (ps.r1, ps.r0)
    out = swap_output(r_in, r_out, v_in, params.fee)
    r_in, r_out = r_in + v_in, r_out - out
    new = PairState(r_in, r_out, ps.supply) if forward else PairState(r_out, r_in, ps.supply)
    cfg = debit(cfg, user, v_in, token_in, premise=2)
    cfg = credit(cfg, user, out, token_out)
    return _set_pair(cfg, key, new), out


def amm_redeem(cfg: Configuration, user: str, v: Fraction, t: Token) -> tuple[Configuration, tuple[Fraction, Fraction]]:
    if not isinstance(t, AmmMinted) or t.pair not in cfg.amm.pairs:
        raise WrongTokenClass(f"{t} is not a pair token of this AMM")
    if v <= 0:
        raise NonPositiveAmount(f"redeem amount must be positive, got {fmt(v)}", premise=1)
    if cfg.balance(user, t) < v:
        raise InsufficientBalance(f"{user} holds {fmt(cfg.balance(user, t))} {t}, redeems {fmt(v)}", premise=1)
    ps = cfg.amm.pairs[t.pair]
    e0, e1 = pair_exchange_rate(ps)
    o0, o1 = v * e0, v * e1
    cfg = debit(cfg, user, v, t, premise=1)
    cfg = credit(cfg, user, o0, t.t0)
    cfg = credit(cfg, user, o1, t.t1)
    return _set_pair(cfg, t.pair, PairState(ps.r0 - o0, ps.r1 - o1, ps.supply - v)), (o0, o1)


def exch_rate(amm: AmmState, t0: Free, t1: Free) -> Fraction:
    """Marginal price of ``t0`` in units of ``t1``."""
    found = amm.find(t0, t1)
    if found is None or not found[1].funded:
        raise EmptyPair(f"no funded pair for {t0} and {t1}")
    (a, _), ps = found
    return ps.r1 / ps.r0 if a == t0 else ps.r0 / ps.r1


def eff_exch_rate(amm: AmmState, token_in: Free, token_out: Free, v_in: Fraction, fee: Fraction = ZERO) -> Fraction:
    """Units received per unit sold for a swap of ``v_in``; the marginal rate at ``v_in = 0``."""
    found = amm.find(token_in, token_out)
    if found is None or not found[1].funded:
        raise EmptyPair(f"no funded pair for {token_in} and {token_out}")
    (a, _), ps = found
    r_in, r_out = (ps.r0, ps.r1) if a == token_in else (ps.r1, ps.r0)
    if v_in == 0:
        return (1 - fee) * r_out / r_in
    return swap_output(r_in, r_out, v_in, fee) / v_in


def rate_gap(cfg: Configuration, key: Pair) -> Fraction:
    """Distance between the pair's marginal rate and the oracle-implied rate."""
    a, b = key
    ps = cfg.amm.pairs[key]
    return abs(ps.r1 / ps.r0 - cfg.oracle[a] / cfg.oracle[b])


def arb_pairs(cfg: Configuration) -> list[Pair]:
    out = []
    for (a, b), ps in sorted(cfg.amm.pairs.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))):
        if ps.funded and ps.r1 * cfg.oracle[b] != ps.r0 * cfg.oracle[a]:
            out.append((a, b))
    return out


def arb_set(cfg: Configuration) -> set[Free]:
    """Tokens of funded pairs whose AMM rate disagrees with the oracle."""
    found: set[Free] = set()
    for a, b in arb_pairs(cfg):
        found.update((a, b))
    return found


def _floor_sqrt_minus(q: Fraction, r: Fraction, denom: int) -> Fraction:
    """Largest multiple of ``1/denom`` not exceeding ``sqrt(q) - r``."""
    target = q * denom * denom
    a = r * denom
    # floor(sqrt(target)) is exact through isqrt of the integer part
    n = (isqrt(target.numerator // target.denominator) - a).__floor__()

    def fits(y: Fraction) -> bool:
        return y <= 0 or y * y <= target

    while fits(n + 1 + a):
        n += 1
    return Fraction(n, denom)


def optimal_arb_input(
    r_in: Fraction, r_out: Fraction, p_in: Fraction, p_out: Fraction, fee: Fraction = ZERO, denom: int = 10**6
) -> Fraction:
    """Grid-floored input maximizing ``p_out * out - p_in * x``.

    The real optimum solves ``(r_in + x)^2 = r_in * r_out * (1 - fee) * p_out / p_in``.
    Returns 0 when no positive input is profitable. The grid is refined by
    factors of ten until the floored input is positive.
    """
    q = r_in * r_out * (1 - fee) * p_out / p_in
    if q <= r_in * r_in:
        return ZERO
    d = denom
    for _ in range(40):
        x = _floor_sqrt_minus(q, r_in, d)
        if x > 0:
            return x
        d *= 10
    return ZERO


def close_arbitrage(
    cfg: Configuration, params: SwapParams, user: str, denom: int = 10**6
) -> tuple[Configuration, Fraction]:
    """Swap once on every mispriced pair toward the oracle rate; return oracle-valued profit."""
    pairs = arb_pairs(cfg)
    if not pairs:
        raise NoArbitrage("every funded pair agrees with the oracle")
    profit = ZERO
    traded = False
    short: list[str] = []
    for a, b in pairs:
        ps = cfg.amm.pairs[(a, b)]
        # AMM pays more b per a than the oracle: sell a into the pool
        if ps.r1 * cfg.oracle[b] > ps.r0 * cfg.oracle[a]:
            t_in, t_out, r_in, r_out = a, b, ps.r0, ps.r1
        else:
            t_in, t_out, r_in, r_out = b, a, ps.r1, ps.r0
        x = optimal_arb_input(r_in, r_out, cfg.oracle[t_in], cfg.oracle[t_out], params.fee, denom)
        if x <= 0:
            continue
        x = min(x, cfg.balance(user, t_in))
        if x <= 0:
            short.append(str(t_in))
            continue
        cfg, out = amm_swap(cfg, params, user, t_in, t_out, x)
        profit += out * cfg.oracle[t_out] - x * cfg.oracle[t_in]
        traded = True
    if not traded:
        if short:
            raise InsufficientBalance(f"{user} holds none of {', '.join(short)} to trade")
        raise NoArbitrage("fees absorb every rate gap")
    return cfg, profit
