from __future__ import annotations

from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from defisem.amm import amm_deposit, amm_redeem, amm_swap, swap_output, SwapParams
from defisem.lending import deposit, exchange_rate, redeem
from defisem.ledger import supply, transfer
from defisem.state import AmmMinted

from helpers import DEFAULT, M0, T0, T1, make

amounts = st.fractions(min_value=Fraction(1, 100), max_value=1000, max_denominator=100)
fees = st.sampled_from([Fraction(0), Fraction(3, 1000), Fraction(1, 100)])


@given(amounts, amounts, amounts, fees)
def test_swap_output_bounded_and_product_grows(r_in, r_out, v, fee):
    out = swap_output(r_in, r_out, v, fee)
    assert 0 < out < r_out
    assert (r_in + v) * (r_out - out) >= r_in * r_out


@given(amounts, amounts, amounts)
def test_fee_free_swap_round_trip_returns_input(r0, r1, v):
    cfg = make(wallets={"U": {"τ0": v}}, amm=[{"t0": "τ0", "t1": "τ1", "r0": r0, "r1": r1}])
    cfg, out = amm_swap(cfg, SwapParams(), "U", T0, T1, v)
    cfg, back = amm_swap(cfg, SwapParams(), "U", T1, T0, out)
    assert back == v
    assert cfg.amm.pairs[(T0, T1)].r0 == r0 and cfg.amm.pairs[(T0, T1)].r1 == r1


@given(amounts, amounts, st.fractions(min_value=Fraction(1, 100), max_value=1, max_denominator=100))
def test_pair_deposit_then_redeem_is_proportional(r0, r1, share):
    cfg = make(wallets={"U": {"τ0": r0, "τ1": r1}}, amm=[{"t0": "τ0", "t1": "τ1", "r0": 10, "r1": 20}])
    v0 = r0
    v1 = v0 * 2
    if v1 > r1:
        v0, v1 = r1 / 2, r1
    cfg = amm_deposit(cfg, "U", v0, T0, v1, T1)
    lp = AmmMinted(T0, T1)
    minted = cfg.balance("U", lp)
    cfg, (o0, o1) = amm_redeem(cfg, "U", minted * share, lp)
    assert (o0, o1) == (v0 * share, v1 * share)
    ps = cfg.amm.pairs[(T0, T1)]
    assert ps.r1 / ps.r0 == 2


@given(amounts, amounts, amounts, amounts)
def test_deposit_and_redeem_keep_the_exchange_rate(fund, loan, minted, v):
    cfg = make(
        wallets={"U": {"τ0": v}},
        funds={"τ0": fund},
        loans={"Z": {"τ0": loan}},
        minted={"τ0": minted},
    )
    er = exchange_rate(cfg.lp, T0)
    after = deposit(cfg, "U", v, T0)
    assert exchange_rate(after.lp, T0) == er
    got = after.balance("U", M0)
    assert got == v / er
    if after.lp.fund(T0) >= v:
        back = redeem(after, DEFAULT, "U", got, M0)
        assert back.balance("U", T0) == v and exchange_rate(back.lp, T0) == er


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC"), amounts), max_size=20))
def test_transfers_conserve_supply(moves):
    cfg = make(wallets={u: {"τ0": 500} for u in "ABC"})
    for a, b, v in moves:
        if cfg.balance(a, T0) >= v:
            cfg = transfer(cfg, a, b, v, T0)
    assert supply(cfg, T0) == 1500
    assert all(cfg.balance(u, T0) >= 0 for u in "ABC")
