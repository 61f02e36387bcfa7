from __future__ import annotations

from dataclasses import replace

import pytest

from defisem.engine import (
    AmmSwap,
    AtomicGroup,
    Authorization,
    Bor,
    Dep,
    Drop,
    FBorrow,
    FBorrowM,
    Fifo,
    FlashParams,
    FRepay,
    FRepayM,
    Int,
    NetworkState,
    Params,
    Px,
    Rdm,
    Reorder,
    Sandwich,
    Trf,
    announce,
    apply_tx,
    execute_group,
    execute_tx,
    group_substates,
    schedule,
    step,
    validate_flash_obligations,
)
from defisem.errors import (
    AtomicityFailure,
    FlashObligationUnmet,
    FlashOutsideGroup,
    InsufficientFlashFee,
    MalformedAuthorization,
    NotAuthorized,
    PredicateFalse,
)
from defisem.lending import LpParams, collateralization

from helpers import F, M0, T0, T1, T2, make

FLASH = Params(flash=FlashParams(F(1, 100)))


@pytest.fixture
def ns():
    cfg = make(
        wallets={"A": {"τ0": 100, "τ1": 100}, "B": {"τ0": 10, "τ1": 10}},
        funds={"τ0": 50},
        minted={"τ0": 50},
    )
    cfg = cfg.with_(wallets={**cfg.wallets, "C": {M0: F(50)}})
    return NetworkState(cfg, FLASH)


def auth(payload, signer="A", **kw):
    return Authorization(signer, payload, **kw)


def test_unannounced_transaction_is_rejected(ns):
    with pytest.raises(NotAuthorized):
        execute_tx(ns, Trf("A", "B", F(1), T0))


def test_single_use_authorization_is_consumed(ns):
    tx = Trf("A", "B", F(1), T0)
    ns = announce(ns, auth(tx))
    ns = execute_tx(ns, tx)
    assert ns.cfg.balance("B", T0) == 11
    with pytest.raises(NotAuthorized):
        execute_tx(ns, tx)


def test_multi_use_authorization_replays(ns):
    tx = Trf("A", "B", F(1), T0)
    ns = announce(ns, auth(tx, multi_use=True))
    ns = execute_tx(execute_tx(ns, tx), tx)
    assert ns.cfg.balance("B", T0) == 12


def test_predicate_gates_execution(ns):
    tx = Trf("A", "B", F(1), T0)
    ns = announce(ns, auth(tx, predicate=(">=", ("price", T0), F(2))))
    with pytest.raises(PredicateFalse):
        execute_tx(ns, tx)
    ns = execute_tx(ns, Px.of({T0: F(2), T1: F(1), T2: F(1)}))
    assert execute_tx(ns, tx).cfg.balance("B", T0) == 11


def test_malformed_authorizations(ns):
    with pytest.raises(MalformedAuthorization):
        announce(ns, auth(Int()))
    with pytest.raises(MalformedAuthorization):
        announce(ns, auth(Trf("B", "A", F(1), T0)))
    with pytest.raises(MalformedAuthorization):
        announce(ns, auth(AtomicGroup("A", ())))
    with pytest.raises(MalformedAuthorization):
        announce(ns, auth(Trf("A", "B", F(1), T0), predicate=("~", 1, 2)))


def test_environment_steps_need_no_authorization(ns):
    assert execute_tx(ns, Px.of({T0: F(3), T1: F(1), T2: F(1)})).cfg.oracle[T0] == 3


def test_flash_outside_group_is_rejected(ns):
    with pytest.raises(FlashOutsideGroup):
        apply_tx(ns.cfg, ns.params, FBorrow("A", F(1), T0))


def _run(ns, *txs, signer="A"):
    g = AtomicGroup(signer, tuple(txs))
    return execute_group(announce(ns, auth(g, signer)), g)


def test_flash_loan_round_trip_pays_fee_to_pool(ns):
    post = _run(ns, FBorrow("A", F(40), T0), FRepay("A", F(41), T0))
    assert post.cfg.lp.fund(T0) == 51 and post.cfg.balance("A", T0) == 99


def test_failed_step_rolls_back_group(ns):
    g = AtomicGroup("A", (Trf("A", "B", F(5), T0), Trf("A", "B", F(500), T0)))
    ns2 = announce(ns, auth(g))
    with pytest.raises(AtomicityFailure) as e:
        execute_group(ns2, g)
    assert e.value.step == 1
    assert ns2.cfg == ns.cfg


@pytest.mark.parametrize(
    "txs",
    [
        (FBorrow("A", F(40), T0),),
        (FBorrow("A", F(40), T0), FRepay("A", F(40), T0)),
        (FBorrow("A", F(40), T0), FRepay("A", F(40) + F(1, 200), T0)),
    ],
)
def test_unmet_flash_obligations(ns, txs):
    with pytest.raises(FlashObligationUnmet):
        _run(ns, *txs)


def test_flash_fee_floor_is_inclusive(ns):
    post = _run(ns, FBorrow("A", F(40), T0), FRepay("A", F(40) + F(1, 100), T0))
    assert post.cfg.lp.fund(T0) == 50 + F(1, 100)


def test_flash_matching_is_first_unmatched(ns):
    txs = (FBorrow("A", F(10), T0), FBorrow("A", F(20), T0), FRepay("A", F(11), T0), FRepay("A", F(21), T0))
    assert validate_flash_obligations(txs, FLASH.flash, ns.cfg.oracle) is None
    swapped = (FBorrow("A", F(10), T0), FBorrow("A", F(20), T0), FRepay("A", F(21), T0), FRepay("A", F(11), T0))
    v = validate_flash_obligations(swapped, FLASH.flash, ns.cfg.oracle)
    assert v.kind == "short-repay" and v.index == 3


def test_minted_flash_loan(ns):
    post = _run(ns, FBorrowM("A", F(10), M0), FRepayM("A", F(10), M0, F(1, 50), T1))
    assert post.cfg.lp.supply_of(T0) == 50 and post.cfg.lp.fund(T1) == F(1, 50)
    with pytest.raises(AtomicityFailure) as e:
        _run(ns, FBorrowM("A", F(10), M0), FRepayM("A", F(10), M0, F(1, 100), T1))
    assert isinstance(e.value.inner, InsufficientFlashFee)
    with pytest.raises(FlashObligationUnmet):
        _run(ns, FBorrowM("A", F(10), M0), FRepayM("A", F(5), M0, F(1, 50), T1))


def test_snapshot_is_frozen_inside_group():
    cfg = make(
        wallets={"A": {"τ0": 1000}, "B": {"τ1'": 30}},
        funds={"τ0": 100, "τ1": 30},
        minted={"τ0": 100, "τ1": 30},
        loans={"B": {"τ0": 10}},
        amm=[{"t0": "τ1", "t1": "τ0", "r0": 100, "r1": 100}],
    )
    params = Params(lp=LpParams(oracle_source="amm-snapshot", anchor=T0))
    ns = NetworkState(cfg, params)
    entry = collateralization(cfg, "B", params.lp)
    g = AtomicGroup("A", (AmmSwap("A", T0, T1, F(300)),))
    for sub in group_substates(ns, g):
        assert collateralization(sub, "B", params.lp) == entry
    post = execute_group(announce(ns, auth(g)), g)
    assert collateralization(post.cfg, "B", params.lp) != entry


def test_schedule_policies(ns):
    a = auth(Trf("A", "B", F(1), T0))
    b = auth(Trf("B", "A", F(20), T0), "B")
    res = schedule(ns, Fifo(), [a, b])
    assert [e.ok for e in res.log] == [True, False]
    res = schedule(ns, Reorder((1, 0)), [b, a])
    assert [e.ok for e in res.log] == [True, False]
    res = schedule(ns, Drop(frozenset({0})), [a, b])
    assert len(res.log) == 1
    front, back = auth(Trf("A", "C", F(1), T0)), auth(Trf("C", "A", F(1), T0), "C")
    res = schedule(ns, Sandwich(0, (front,), (back,)), [a])
    assert [e.item for e in res.log] == [front, a, back]
    assert all(e.ok for e in res.log)
    with pytest.raises(ValueError):
        schedule(ns, Reorder((0, 0)), [a, b])


def test_schedule_reports_worth_deltas(ns):
    res = schedule(ns, Fifo(), [auth(Trf("A", "B", F(3), T0))])
    assert res.worth_delta["A"] == -3 and res.worth_delta["B"] == 3


def test_step_refreshes_snapshot():
    cfg = make(wallets={"A": {"τ0": 50}}, amm=[{"t0": "τ0", "t1": "τ1", "r0": 10, "r1": 10}])
    post = step(cfg, Params(), AmmSwap("A", T0, T1, F(10)))
    assert post.snapshot[(T0, T1)] == F(5, 20)


def test_flash_borrow_lowers_exchange_rate_inside_group(ns):
    # the borrowed funds leave the pool without a recorded loan, so a deposit
    # inside the group mints at the depressed rate 30/50
    post = _run(ns, FBorrow("A", F(20), T0), Dep("A", F(20), T0), FRepay("A", F(21), T0))
    assert post.cfg.balance("A", M0) == F(100, 3)
    assert post.cfg.lp.fund(T0) == 71


def test_bor_inside_group_uses_collateral_rules(ns):
    cfg = replace(ns.cfg, wallets={**ns.cfg.wallets, "A": {T0: F(10)}})
    g = AtomicGroup("A", (Bor("A", F(1), T0),))
    with pytest.raises(AtomicityFailure):
        execute_group(announce(replace(ns, cfg=cfg), auth(g)), g)
