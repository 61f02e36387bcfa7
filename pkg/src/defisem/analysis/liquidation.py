"""Extractable value from liquidations: a greedy optimizer and an exhaustive grid oracle.

A plan assigns, per liquidatable victim, seized units of a pool-minted token
to each (repaid token, seized token) cell. Seized units are assumed to be
redeemed immediately, so the pool must hold enough of the underlying.

Two facts keep the search small. The repaid value for ``s`` seized units of
``t'`` is ``s * p(u') / r_liq`` whichever token is repaid, and so is the
per-unit objective. The repaid token therefore only matters through the
per-token loan caps, which are checked by a small split search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable

import numpy as np

from ..errors import InstanceTooLarge
from ..lending import (
    LpParams,
    collateral_value,
    collateralization,
    exchange_rate,
    liquidatable,
    loan_value,
    pool_prices,
)
from ..state import Configuration, Free, LpMinted, token_key

ZERO = Fraction(0)
Cell = tuple[Free, LpMinted]

MAX_VICTIMS = 3
MAX_COLLATERAL = 2
MAX_AXIS = 20


@dataclass(frozen=True)
class LiquidationPlan:
    alloc: dict = field(default_factory=dict)  # victim -> {(repaid, seized): units}
    objective_value: Fraction = ZERO

    def seized_total(self, t: LpMinted) -> Fraction:
        return sum((u for cells in self.alloc.values() for (_, s), u in cells.items() if s == t), ZERO)


@dataclass
class _Victim:
    name: str
    coll: list[LpMinted]
    loans: list[Free]
    bal: dict[LpMinted, Fraction]
    loan_cap: dict[Free, Fraction]  # loan value per repaid token
    lv: Fraction
    cv: Fraction


class _Instance:
    def __init__(self, cfg: Configuration, params: LpParams, granularity: Fraction, objective: str):
        if granularity <= 0:
            raise ValueError("granularity must be positive")
        if objective not in ("net", "literal"):
            raise ValueError(f"unknown objective {objective!r}")
        self.cfg, self.params, self.g, self.objective = cfg, params, Fraction(granularity), objective
        self.prices = pool_prices(cfg, params)
        self.victims: list[_Victim] = []
        for name in liquidatable(cfg, params):
            wallet = cfg.wallets.get(name, {})
            coll = sorted(
                (t for t, a in wallet.items() if isinstance(t, LpMinted) and a > 0 and t.underlying in cfg.lp.minted),
                key=token_key,
            )
            loans = sorted((t for t, a in cfg.lp.loans.get(name, {}).items() if a > 0), key=token_key)
            self.victims.append(
                _Victim(
                    name,
                    coll,
                    loans,
                    {t: wallet[t] for t in coll},
                    {t: cfg.lp.loan(name, t) * self.prices[t] for t in loans},
                    loan_value(cfg, name, self.prices),
                    collateral_value(cfg, name, self.prices),
                )
            )
        self.tokens: list[LpMinted] = sorted({t for v in self.victims for t in v.coll}, key=token_key)
        self.er = {t: exchange_rate(cfg.lp, t.underlying) for t in self.tokens}

    # per seized unit of t'
    def repaid_value(self, t: LpMinted) -> Fraction:
        return self.prices[t.underlying] / self.params.r_liq

    def unit_value(self, t: LpMinted) -> Fraction:
        p = self.prices[t.underlying]
        if self.objective == "literal":
            return 1 / p
        return p * (self.er[t] - 1 / self.params.r_liq)

    def restore_cost(self, t: LpMinted) -> Fraction:
        # change of collVal - c_min*loanVal per seized unit
        p = self.prices[t.underlying]
        return p * (self.params.c_min / self.params.r_liq - self.er[t])

    def fund_cap_units(self, t: LpMinted) -> int:
        return int(self.cfg.lp.fund(t.underlying) / (self.er[t] * self.g))

    def victim_ok(self, v: _Victim, units: dict[LpMinted, int]) -> dict[Cell, int] | None:
        """Cells realizing the per-victim totals, or None if infeasible."""
        g = self.g
        total = sum(units.values())
        if total == 0:
            return {}
        for t, n in units.items():
            if n < 0 or n * g > v.bal.get(t, ZERO):
                return None
        repaid = sum((n * g * self.repaid_value(t) for t, n in units.items()), ZERO)
        if not repaid < v.lv:
            return None
        if sum((n * g * self.prices[t.underlying] for t, n in units.items()), ZERO) > v.cv:
            return None
        slack = v.cv - self.params.c_min * v.lv
        slack += sum((n * g * self.restore_cost(t) for t, n in units.items()), ZERO)
        if slack > 0:
            return None
        return self._split(v, units)

    def _split(self, v: _Victim, units: dict[LpMinted, int]) -> dict[Cell, int] | None:
        """Assign seized units to repaid tokens within each token's loan value."""
        toks = [t for t in v.coll if units.get(t, 0) > 0]
        caps = dict(v.loan_cap)
        w = {t: self.g * self.repaid_value(t) for t in toks}

        def rec(i: int, remaining: dict[Free, Fraction]) -> dict[Cell, int] | None:
            if i == len(toks):
                return {}
            t = toks[i]
            n = units[t]
            return assign(t, n, 0, remaining, i)

        def assign(t: LpMinted, n: int, j: int, remaining: dict[Free, Fraction], i: int):
            loans = v.loans
            if j == len(loans) - 1:
                if n * w[t] > remaining[loans[j]]:
                    return None
                rest = dict(remaining)
                rest[loans[j]] -= n * w[t]
                tail = rec(i + 1, rest)
                if tail is None:
                    return None
                if n:
                    tail[(loans[j], t)] = n
                return tail
            lt = loans[j]
            top = min(n, int(remaining[lt] / w[t]))
            for k in range(top, -1, -1):
                rest = dict(remaining)
                rest[lt] -= k * w[t]
                tail = assign(t, n - k, j + 1, rest, i)
                if tail is not None:
                    if k:
                        tail[(lt, t)] = k
                    return tail
            return None

        if not v.loans:
            return None
        return rec(0, caps)

    def value_of(self, totals: dict[LpMinted, int]) -> Fraction:
        return sum((n * self.g * self.unit_value(t) for t, n in totals.items()), ZERO)

    def to_plan(self, per_victim: dict[str, dict[Cell, int]]) -> LiquidationPlan:
        alloc: dict[str, dict[Cell, Fraction]] = {}
        totals: dict[LpMinted, int] = {}
        for name, cells in per_victim.items():
            cells = {c: n for c, n in cells.items() if n}
            if cells:
                alloc[name] = {c: n * self.g for c, n in sorted(cells.items(), key=lambda kv: (kv[0][0].name, str(kv[0][1])))}
            for (_, t), n in cells.items():
                totals[t] = totals.get(t, 0) + n
        return LiquidationPlan(alloc, self.value_of(totals))


def plan_value(cfg: Configuration, params: LpParams, plan: LiquidationPlan, objective: str = "net") -> Fraction:
    inst = _Instance(cfg, params, Fraction(1), objective)
    er = {t: exchange_rate(cfg.lp, t.underlying) for cells in plan.alloc.values() for (_, t) in cells}
    inst.er.update(er)
    return sum((u * inst.unit_value(t) for cells in plan.alloc.values() for (_, t), u in cells.items()), ZERO)


def check_plan(
    cfg: Configuration, params: LpParams, plan: LiquidationPlan, granularity: Fraction | None = None
) -> list[str]:
    """Return every violated plan constraint; an empty list means the plan is feasible."""
    problems: list[str] = []
    prices = pool_prices(cfg, params)
    liq = set(liquidatable(cfg, params))
    fund_use: dict[LpMinted, Fraction] = {}
    for victim, cells in plan.alloc.items():
        if victim not in liq:
            problems.append(f"{victim} is not liquidatable")
            continue
        per_seized: dict[LpMinted, Fraction] = {}
        per_repaid: dict[Free, Fraction] = {}
        repaid_total = seized_value = restore = ZERO
        for (t, tm), units in cells.items():
            if units < 0:
                problems.append(f"{victim}: negative units in ({t}, {tm})")
            if granularity is not None and (units / granularity).denominator != 1:
                problems.append(f"{victim}: {units} is off the {granularity} grid")
            if not isinstance(tm, LpMinted) or tm.underlying not in cfg.lp.minted:
                problems.append(f"{victim}: {tm} is not pool-minted")
                continue
            er = exchange_rate(cfg.lp, tm.underlying)
            p = prices[tm.underlying]
            rv = units * p / params.r_liq
            per_seized[tm] = per_seized.get(tm, ZERO) + units
            per_repaid[t] = per_repaid.get(t, ZERO) + rv
            repaid_total += rv
            seized_value += units * p
            restore += units * p * (params.c_min / params.r_liq - er)
            fund_use[tm] = fund_use.get(tm, ZERO) + units * er
        cv = collateral_value(cfg, victim, prices)
        lv = loan_value(cfg, victim, prices)
        if seized_value > cv:
            problems.append(f"{victim}: seized value {seized_value} exceeds collateral value {cv}")
        for t, rv in per_repaid.items():
            cap = cfg.lp.loan(victim, t) * prices[t]
            if rv > cap:
                problems.append(f"{victim}: repays {rv} of {t} value against a loan worth {cap}")
        for tm, units in per_seized.items():
            if units > cfg.balance(victim, tm):
                problems.append(f"{victim}: seizes {units} {tm} but holds {cfg.balance(victim, tm)}")
        if repaid_total > 0:
            if not repaid_total < lv:
                problems.append(f"{victim}: repayment clears the whole loan value")
            if cv - params.c_min * lv + restore > 0:
                problems.append(f"{victim}: collateralization would end above the minimum")
    for tm, need in fund_use.items():
        have = cfg.lp.fund(tm.underlying)
        if need > have:
            problems.append(f"redeeming seized {tm} needs {need} {tm.underlying}, pool holds {have}")
    return problems


# ---------------------------------------------------------------- heuristic


def optimal_liquidation(
    cfg: Configuration, params: LpParams, granularity: Fraction = Fraction(1), objective: str = "net"
) -> LiquidationPlan:
    """Greedy allocation by per-unit value, then local repair moves."""
    inst = _Instance(cfg, params, Fraction(granularity), objective)
    if not inst.victims:
        return LiquidationPlan()
    # units worth nothing or less are never seized
    keys = [(v.name, t) for v in inst.victims for t in v.coll if inst.unit_value(t) > 0]
    victims = {v.name: v for v in inst.victims}
    fund_cap = {t: inst.fund_cap_units(t) for t in inst.tokens}

    def feasible(state: dict) -> bool:
        used: dict[LpMinted, int] = {}
        for (name, t), n in state.items():
            used[t] = used.get(t, 0) + n
        if any(used[t] > fund_cap[t] for t in used):
            return False
        for v in inst.victims:
            units = {t: state.get((v.name, t), 0) for t in v.coll}
            if inst.victim_ok(v, units) is None:
                return False
        return True

    def victim_feasible(state: dict, name: str) -> bool:
        v = victims[name]
        return inst.victim_ok(v, {t: state.get((name, t), 0) for t in v.coll}) is not None

    def fund_left(state: dict, t: LpMinted) -> int:
        return fund_cap[t] - sum(n for (_, tt), n in state.items() if tt == t)

    def value(state: dict) -> Fraction:
        return sum((n * inst.unit_value(t) for (_, t), n in state.items()), ZERO)

    def fill(state: dict, order: list) -> dict:
        state = dict(state)
        for key in order:
            name, t = key
            hi = min(fund_left(state, t), int(victims[name].bal[t] / inst.g) - state[key])
            lo = 0
            # largest feasible increment by bisection; per-victim feasibility is downward closed
            while lo < hi:
                mid = (lo + hi + 1) // 2
                state[key] += mid
                ok = victim_feasible(state, name)
                state[key] -= mid
                if ok:
                    lo = mid
                else:
                    hi = mid - 1
            state[key] += lo
        return state

    def rank(key):
        name, t = key
        per_fund = inst.unit_value(t) / inst.er[t]
        cost = inst.restore_cost(t)
        return (-per_fund, cost, name, str(t))

    order = sorted(keys, key=rank)
    state = fill({k: 0 for k in keys}, order)
    best = value(state)

    improved = True
    while improved:
        improved = False
        for src in keys:
            if state[src] == 0:
                continue
            for step in (1, 2, 4, 8):
                if state[src] < step:
                    break
                trial = dict(state)
                trial[src] -= step
                others = [k for k in order if k != src] + [src]
                trial = fill(trial, others)
                tv = value(trial)
                if tv > best and feasible(trial):
                    state, best, improved = trial, tv, True
                    break
            if improved:
                break

    per_victim: dict[str, dict[Cell, int]] = {}
    for v in inst.victims:
        cells = inst.victim_ok(v, {t: state[(v.name, t)] for t in v.coll})
        per_victim[v.name] = cells or {}
    return inst.to_plan(per_victim)


# ---------------------------------------------------------------- oracle


def optimal_liquidation_oracle(
    cfg: Configuration, params: LpParams, granularity: Fraction = Fraction(1), objective: str = "net"
) -> LiquidationPlan:
    """Exhaustive grid optimum for small instances.

    Every per-victim vector of seized totals is enumerated; victims are then
    combined by Minkowski sums over seized totals, capped by pool funds.
    """
    inst = _Instance(cfg, params, Fraction(granularity), objective)
    if not inst.victims:
        return LiquidationPlan()
    if len(inst.victims) > MAX_VICTIMS or len(inst.tokens) > MAX_COLLATERAL:
        raise InstanceTooLarge(f"{len(inst.victims)} victims, {len(inst.tokens)} collateral tokens")
    axes = inst.tokens
    idx = {t: i for i, t in enumerate(axes)}
    caps = [inst.fund_cap_units(t) for t in axes]

    per_victim_sets: list[dict[tuple[int, ...], dict[Cell, int]]] = []
    for v in inst.victims:
        bounds = []
        for t in axes:
            top = int(v.bal.get(t, ZERO) / inst.g) if t in v.bal else 0
            if top > MAX_AXIS:
                raise InstanceTooLarge(f"{v.name}: {top + 1} grid points for {t}")
            bounds.append(range(min(top, caps[idx[t]]) + 1))
        feasible: dict[tuple[int, ...], dict[Cell, int]] = {}
        for vec in product(*bounds):
            cells = inst.victim_ok(v, {t: vec[idx[t]] for t in axes if vec[idx[t]] or t in v.bal})
            if cells is not None:
                feasible[vec] = cells
        per_victim_sets.append(feasible)

    shape = tuple(c + 1 for c in caps)
    reach = [np.zeros(shape, dtype=bool)]
    reach[0][(0,) * len(axes)] = True
    for feasible in per_victim_sets:
        prev = reach[-1]
        nxt = np.zeros(shape, dtype=bool)
        for vec in feasible:
            src = tuple(slice(0, shape[i] - vec[i]) for i in range(len(axes)))
            dst = tuple(slice(vec[i], shape[i]) for i in range(len(axes)))
            if all(shape[i] - vec[i] > 0 for i in range(len(axes))):
                nxt[dst] |= prev[src]
        reach.append(nxt)

    unit = [inst.g * inst.unit_value(t) for t in axes]
    best_vec, best_val = None, None
    for vec in zip(*np.nonzero(reach[-1])):
        vec = tuple(int(x) for x in vec)
        val = sum((n * u for n, u in zip(vec, unit)), ZERO)
        if best_val is None or val > best_val or (val == best_val and vec < best_vec):
            best_vec, best_val = vec, val

    # walk back through the victims to recover one allocation reaching best_vec
    per_victim: dict[str, dict[Cell, int]] = {}
    cur = best_vec
    for k in range(len(inst.victims) - 1, -1, -1):
        for vec, cells in sorted(per_victim_sets[k].items()):
            rest = tuple(c - x for c, x in zip(cur, vec))
            if min(rest) >= 0 and reach[k][rest]:
                per_victim[inst.victims[k].name] = cells
                cur = rest
                break
    return inst.to_plan(per_victim)


# ---------------------------------------------------------------- execution


def plan_transactions(cfg: Configuration, params: LpParams, liquidator: str, plan: LiquidationPlan) -> list:
    """Liquidation then redeem transactions that carry out ``plan`` in an executable order.

    Per victim, cells that lower ``collVal - c_min * loanVal`` run first, so
    every intermediate state stays liquidatable.
    """
    from ..engine import Liq, Rdm

    prices = pool_prices(cfg, params)
    txs = []
    seized: dict[LpMinted, Fraction] = {}
    for victim in sorted(plan.alloc):
        cells = plan.alloc[victim]

        def restore(cell):
            tm = cell[1]
            return prices[tm.underlying] * (params.c_min / params.r_liq - exchange_rate(cfg.lp, tm.underlying))

        for cell in sorted(cells, key=lambda c: (restore(c) > 0, c[0].name, str(c[1]))):
            t, tm = cell
            units = cells[cell]
            if units == 0:
                continue
            v = units * prices[tm.underlying] / (prices[t] * params.r_liq)
            txs.append(Liq(liquidator, victim, v, t, tm, units))
            seized[tm] = seized.get(tm, ZERO) + units
    for tm in sorted(seized, key=token_key):
        txs.append(Rdm(liquidator, seized[tm], tm))
    return txs


def repayment_needs(cfg: Configuration, params: LpParams, plan: LiquidationPlan) -> dict[Free, Fraction]:
    prices = pool_prices(cfg, params)
    need: dict[Free, Fraction] = {}
    for cells in plan.alloc.values():
        for (t, tm), units in cells.items():
            need[t] = need.get(t, ZERO) + units * prices[tm.underlying] / (prices[t] * params.r_liq)
    return need


__all__ = [
    "LiquidationPlan",
    "check_plan",
    "optimal_liquidation",
    "optimal_liquidation_oracle",
    "plan_transactions",
    "plan_value",
    "repayment_needs",
]
