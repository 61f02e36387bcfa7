from __future__ import annotations

import math

from defisem.analysis.metrics import (
    epsilon_safety,
    net_worth,
    nr_loan_value,
    safety_report,
    strong_epsilon_safety,
)
from defisem.lending import LpParams

from helpers import DEFAULT, F, make


def test_net_worth_counts_claims_at_exchange_rate_minus_loans():
    cfg = make(
        wallets={"A": {"τ0": 10, "τ1'": 20, "τ0|τ2": 5}},
        funds={"τ1": 30},
        loans={"A": {"τ0": 4}, "B": {"τ1": 10}},
        minted={"τ1": 20},
        amm=[{"t0": "τ0", "t1": "τ2", "r0": 10, "r1": 30, "supply": 10}],
        prices={"τ0": 2, "τ1": 3, "τ2": 1},
    )
    # 10*2 + 20*(40/20)*3 + 5*(1*2 + 3*1) - 4*2
    assert net_worth(cfg, "A") == 20 + 120 + 25 - 8
    assert net_worth(cfg, "Nobody") == 0


def test_net_worth_of_table3_initial_state():
    cfg = make(wallets={"A": {"τ0": 100, "τ1": 300}})
    assert net_worth(cfg, "A") == 400


def test_no_loans_gives_zero_ratios():
    cfg = make(wallets={"A": {"τ0": 1}})
    assert epsilon_safety(cfg, DEFAULT) == 0 and strong_epsilon_safety(cfg, DEFAULT) == 0


def test_healthy_borrowers_give_zero_epsilon():
    cfg = make(wallets={"B": {"τ1'": 100}}, funds={"τ1": 100}, loans={"B": {"τ0": 50}}, minted={"τ1": 100})
    assert epsilon_safety(cfg, DEFAULT) == 0


def test_zero_collateral_borrower_is_fully_unrecoverable():
    cfg = make(loans={"B": {"τ0": 11}})
    assert nr_loan_value(cfg, DEFAULT, "B") == 11
    assert strong_epsilon_safety(cfg, DEFAULT) == 1 and epsilon_safety(cfg, DEFAULT) == 1


def test_nr_loan_value_by_hand():
    cfg = make(wallets={"B": {"τ1'": 55}}, funds={"τ1": 55}, loans={"B": {"τ0": 100}}, minted={"τ1": 55})
    assert nr_loan_value(cfg, LpParams(r_liq=F(11, 10)), "B") == 50
    richer = make(wallets={"B": {"τ1'": 120}}, funds={"τ1": 120}, loans={"B": {"τ0": 100}}, minted={"τ1": 120})
    assert nr_loan_value(richer, DEFAULT, "B") == 0


def test_safety_report_per_user_fields():
    cfg = make(
        wallets={"A": {"τ0": 5}, "B": {"τ1'": 55}, "C": {"τ1'": 200}},
        funds={"τ1": 255},
        loans={"B": {"τ0": 100}, "C": {"τ0": 100}},
        minted={"τ1": 255},
    )
    rep = safety_report(cfg, DEFAULT)
    assert rep.per_user["A"].coll == math.inf
    assert rep.per_user["B"].loan_val == 100 and rep.per_user["B"].coll_val == 55
    assert rep.per_user["B"].nr_loan_val == 50
    assert rep.epsilon_ratio == F(1, 2) and rep.strong_epsilon_ratio == F(1, 4)
    assert rep.strong_epsilon_ratio <= rep.epsilon_ratio
