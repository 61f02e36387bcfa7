"""Command-line harness: replay, table, fuzz and attack.

Exit codes: 0 on pass, 1 on a divergence, violation or failed attack
precondition, 2 when the input does not parse.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from .analysis.attacks import (
    gen_arbitrage,
    gen_over_utilization_attack,
    gen_price_oracle_attack,
    gen_sandwich_attack,
)
from .analysis.liquidation import optimal_liquidation, plan_transactions
from .analysis.metrics import safety_report
from .engine import AmmSwap
from .errors import DefiError, ParseError
from .fuzz import PROFILES, fuzz
from .scenario import (
    attack_to_scenario,
    emit_table,
    load_scenario,
    replay_scenario,
    safety_to_json,
    tx_to_json,
)
from .state import Free, format_rational, parse_rational

ATTACKS = ("price-oracle", "over-utilization", "sandwich", "arbitrage", "liquidation")


def _cmd_replay(args) -> int:
    report = replay_scenario(load_scenario(args.file), strict=args.strict_rules)
    print(report.summary())
    return 0 if report.passed else 1


def _cmd_table(args) -> int:
    report = replay_scenario(load_scenario(args.file), strict=args.strict_rules)
    print(emit_table(report, args.precision))
    return 0 if report.passed else 1


def _cmd_fuzz(args) -> int:
    report = fuzz(args.seed, args.steps, args.profile, traces=args.traces)
    print(report.summary())
    return 0 if report.passed else 1


def _attack_state(args):
    sc = load_scenario(args.scenario)
    if args.at == "initial":
        return sc, sc.initial
    report = replay_scenario(sc)
    if args.at == "final":
        return sc, report.final
    try:
        k = int(args.at)
    except ValueError:
        raise ParseError(f"--at takes initial, final or a step number, got {args.at!r}") from None
    if not 0 <= k <= len(report.states):
        raise ParseError(f"--at {k} is outside 0..{len(report.states)}")
    return sc, report.states[k - 1] if k else sc.initial


def _cmd_attack(args) -> int:
    sc, cfg = _attack_state(args)
    params = sc.params
    try:
        if args.kind == "liquidation":
            plan = optimal_liquidation(cfg, params.lp, objective=args.objective)
            txs = plan_transactions(cfg, params.lp, args.attacker, plan)
            out = {
                "objective": format_rational(plan.objective_value),
                "plan": {
                    victim: [
                        {"repay": str(t), "seize": str(m), "units": format_rational(n)}
                        for (t, m), n in sorted(cells.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1])))
                    ]
                    for victim, cells in sorted(plan.alloc.items())
                },
                "transactions": [tx_to_json(tx) for tx in txs],
                "safety": safety_to_json(safety_report(cfg, params.lp)),
            }
            print(json.dumps(out, indent=2, ensure_ascii=False))
            return 0
        if args.kind == "price-oracle":
            trace = gen_price_oracle_attack(cfg, params, args.attacker, args.victim)
        elif args.kind == "over-utilization":
            trace = gen_over_utilization_attack(
                cfg, params, args.lender, args.borrower, args.honest or None, Free(args.target), Free(args.collateral)
            )
        elif args.kind == "sandwich":
            swap = AmmSwap(args.victim, Free(args.token_in), Free(args.token_out), parse_rational(args.amount))
            trace = gen_sandwich_attack(cfg, params, args.attacker, swap, parse_rational(args.probe))
        else:
            trace = gen_arbitrage(cfg, params, args.attacker)
    except DefiError as exc:
        print(f"attack not applicable: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    users = tuple(sorted(set(trace.initial.wallets) | set(trace.final.wallets)))
    print(f"{trace.label}: attacker gain {format_rational(trace.attacker_gain)} ({trace.measure}), "
          f"victim loss {format_rational(trace.victim_loss)}", file=sys.stderr)
    print(json.dumps(attack_to_scenario(trace, params, users), indent=2, ensure_ascii=False))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="defisem", description="Executable DeFi semantics harness.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("replay", help="replay a scenario file and report divergences")
    r.add_argument("file")
    r.add_argument("--strict-rules", action="store_true", help="enforce every liquidation premise, no waivers")
    r.set_defaults(func=_cmd_replay)

    t = sub.add_parser("table", help="replay a scenario and print its trace table")
    t.add_argument("file")
    t.add_argument("--precision", type=int, default=None, help="decimals (default DEFI_SEM_PRECISION or 2)")
    t.add_argument("--strict-rules", action="store_true")
    t.set_defaults(func=_cmd_table)

    f = sub.add_parser("fuzz", help="random traces with invariant checks")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--steps", type=int, default=50, help="steps per trace")
    f.add_argument("--profile", choices=sorted(PROFILES), default="lp")
    f.add_argument("--traces", type=int, default=1)
    f.set_defaults(func=_cmd_fuzz)

    a = sub.add_parser("attack", help="generate an attack trace from a scenario state")
    a.add_argument("kind", choices=ATTACKS)
    a.add_argument("--scenario", required=True)
    a.add_argument("--at", default="initial", help="initial, final, or the state after step N")
    a.add_argument("--attacker", default="M")
    a.add_argument("--victim", default="B")
    a.add_argument("--lender", default="A")
    a.add_argument("--borrower", default="B")
    a.add_argument("--honest", default="C", help="honest depositor; empty for none")
    a.add_argument("--target", default="τ0")
    a.add_argument("--collateral", default="τ1")
    a.add_argument("--token-in", default="τ0")
    a.add_argument("--token-out", default="τ1")
    a.add_argument("--amount", default="0", help="victim swap input")
    a.add_argument("--probe", default="0", help="largest front-run input to try")
    a.add_argument("--objective", choices=("net", "literal"), default="net")
    a.set_defaults(func=_cmd_attack)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
