"""Scenario files: parsing, replay against expected table cells, and table rendering.

A scenario is a JSON object with ``meta``, ``initial``, ``steps`` and
``checks``. Amounts are rational strings (``"19/16"``, ``"1.3"``).
Transactions are prefix arrays such as ``["Liq", "A", "B", "13", "τ0", "τ1'", "19"]``.
Expected cells are compared after rounding the actual value half-up to the
number of decimals written in the expected string.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

from .amm import SwapParams, refresh_snapshot
from .engine import (
    TRUE,
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
    execute_tx,
)
from .errors import AtomicityFailure, DefiError, OverLiquidation, ParseError, SeizeMismatch
from .invariants import CHECKS, DEFAULT_CHECKS, check_step
from .lending import (
    Constant,
    LpParams,
    Schedule,
    UtilizationLinear,
    collateralization,
    exchange_rate,
    utilization,
)
from .state import (
    AmmMinted,
    AmmState,
    Configuration,
    Free,
    LpMinted,
    LpState,
    PairState,
    Token,
    format_rational,
    parse_rational,
    parse_token,
    token_key,
)

ZERO = Fraction(0)
WAIVABLE = (SeizeMismatch, OverLiquidation)


# ---------------------------------------------------------------- parsing helpers


def _q(value: Any) -> Fraction:
    return parse_rational(value)


def _free(text: str) -> Free:
    t = parse_token(text)
    if not isinstance(t, Free):
        raise ParseError(f"expected a free token, got {text!r}")
    return t


def _percent(value: Any) -> Fraction:
    text = str(value).strip()
    if text.endswith("%"):
        return parse_rational(text[:-1]) / 100
    return parse_rational(value)


def parse_interest(spec: dict | None):
    if spec is None:
        return Constant({}, Fraction(1, 10))
    model = spec.get("model")
    if model == "constant":
        rates = {_free(t): _percent(r) for t, r in spec.get("rates", {}).items()}
        default = spec.get("default")
        return Constant(rates, None if default is None else _percent(default))
    if model == "schedule":
        steps = {int(k): {_free(t): _percent(r) for t, r in row.items()} for k, row in spec["steps"].items()}
        return Schedule(steps)
    if model == "utilization":
        return UtilizationLinear(_percent(spec["base"]), _percent(spec["slope"]))
    raise ParseError(f"unknown interest model {model!r}")


def parse_params(meta: dict) -> Params:
    anchor = meta.get("anchor")
    try:
        lp = LpParams(
            c_min=_q(meta.get("c_min", "3/2")),
            r_liq=_q(meta.get("r_liq", "11/10")),
            interest=parse_interest(meta.get("interest")),
            oracle_source=meta.get("oracle_source", "external"),
            anchor=None if anchor is None else _free(anchor),
        )
        return Params(lp, SwapParams(_q(meta.get("amm_fee", 0))), FlashParams(_q(meta.get("flash_fee", 0))))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _nonneg(value: Any) -> Fraction:
    q = _q(value)
    if q < 0:
        raise ParseError(f"negative amount {value!r}")
    return q


def _amounts(obj: dict) -> dict[Token, Fraction]:
    out = {}
    for t, a in obj.items():
        q = _nonneg(a)
        if q:
            out[parse_token(t)] = q
    return out


def parse_configuration(obj: dict) -> Configuration:
    wallets = {u: w for u, bal in obj.get("wallets", {}).items() if (w := _amounts(bal))}
    funds = {_free(t): _nonneg(a) for t, a in obj.get("funds", {}).items() if _nonneg(a)}
    loans = {}
    for u, bal in obj.get("loans", {}).items():
        entry = {_free(t): _nonneg(a) for t, a in bal.items() if _nonneg(a)}
        if entry:
            loans[u] = entry
    minted = {_free(t): _nonneg(a) for t, a in obj.get("minted", {}).items() if _nonneg(a)}
    pairs = {}
    for p in obj.get("amm", []):
        pairs[(_free(p["t0"]), _free(p["t1"]))] = PairState(_nonneg(p["r0"]), _nonneg(p["r1"]), _nonneg(p.get("supply", p["r0"])))
    prices = {_free(t): _nonneg(a) for t, a in obj.get("prices", {}).items()}
    cfg = Configuration(wallets, LpState(funds, loans, minted), AmmState(pairs), prices)
    return refresh_snapshot(cfg)


_TX_SHAPES = {
    "Trf": (Trf, "s s q t"),
    "Mtrf": (Mtrf, "s s q t"),
    "Dep": (Dep, "s q t"),
    "Bor": (Bor, "s q t"),
    "Rep": (Rep, "s q t"),
    "Rdm": (Rdm, "s q t"),
    "AmmRdm": (AmmRdm, "s q t"),
    "FBorrow": (FBorrow, "s q t"),
    "FRepay": (FRepay, "s q t"),
    "FBorrowM": (FBorrowM, "s q t"),
    "FRepayM": (FRepayM, "s q t q t"),
    "AmmDep": (AmmDep, "s q t q t"),
    "AmmSwap": (AmmSwap, "s t t q"),
}


def parse_tx(arr: list):
    if not isinstance(arr, list) or not arr:
        raise ParseError(f"transaction must be a nonempty array, got {arr!r}")
    kind, args = arr[0], arr[1:]
    if kind == "Px":
        if len(args) != 1 or not isinstance(args[0], dict):
            raise ParseError("Px takes one price map")
        return Px.of({_free(t): _q(p) for t, p in args[0].items()})
    if kind == "Int":
        return Int(int(args[0]) if args else 0)
    if kind == "Liq":
        if len(args) not in (5, 6):
            raise ParseError(f"Liq takes 5 or 6 arguments, got {len(args)}")
        seized = _q(args[5]) if len(args) == 6 and args[5] is not None else None
        return Liq(args[0], args[1], _q(args[2]), parse_token(args[3]), parse_token(args[4]), seized)
    if kind not in _TX_SHAPES:
        raise ParseError(f"unknown transaction kind {kind!r}")
    cls, shape = _TX_SHAPES[kind]
    codes = shape.split()
    if len(args) != len(codes):
        raise ParseError(f"{kind} takes {len(codes)} arguments, got {len(args)}")
    conv = {"s": str, "q": _q, "t": parse_token}
    return cls(*(conv[c](a) for c, a in zip(codes, args)))


def parse_term(term):
    if isinstance(term, list):
        kind = term[0]
        if kind in ("price", "util"):
            return (kind, _free(term[1]))
        if kind == "coll":
            return ("coll", term[1])
        if kind == "exch":
            return ("exch", _free(term[1]), _free(term[2]))
        raise ParseError(f"unknown predicate term {term!r}")
    return _q(term)


def parse_predicate(pred) -> tuple:
    if pred is None:
        return TRUE
    if not isinstance(pred, list) or not pred:
        raise ParseError(f"predicate must be a nonempty array, got {pred!r}")
    op = pred[0]
    if op == "true":
        return TRUE
    if op == "not":
        return ("not", parse_predicate(pred[1]))
    if op in ("and", "or"):
        return (op, *(parse_predicate(p) for p in pred[1:]))
    if op in ("<", "<=", "=", ">=", ">") and len(pred) == 3:
        return (op, parse_term(pred[1]), parse_term(pred[2]))
    raise ParseError(f"bad predicate {pred!r}")


def parse_payload(obj):
    if isinstance(obj, dict) and "group" in obj:
        return parse_group(obj["group"])
    return parse_tx(obj)


def parse_group(obj: dict) -> AtomicGroup:
    return AtomicGroup(obj["signer"], tuple(parse_tx(t) for t in obj["txs"]))


# ---------------------------------------------------------------- scenario model


@dataclass
class Step:
    label: str
    kind: str  # "tx", "group" or "announce"
    payload: Any
    expect: dict = field(default_factory=dict)
    fails: str | None = None
    row: int | None = None
    auth: Authorization | None = None


@dataclass
class Scenario:
    name: str
    params: Params
    initial: Configuration
    steps: list[Step]
    checks: tuple[str, ...]
    authorization: str = "implicit"
    meta: dict = field(default_factory=dict)


def parse_scenario(data: dict | str | bytes) -> Scenario:
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("scenario must be a JSON object")
    try:
        meta = data.get("meta", {})
        params = parse_params(meta)
        initial = parse_configuration(data.get("initial", {}))
        steps = []
        for i, raw in enumerate(data.get("steps", [])):
            expect = raw.get("expect", {})
            fails = raw.get("fails")
            row = raw.get("row")
            if "tx" in raw:
                tx = parse_tx(raw["tx"])
                steps.append(Step(raw.get("label", f"{i + 1}. {type(tx).__name__}"), "tx", tx, expect, fails, row))
            elif "group" in raw:
                g = parse_group(raw["group"])
                steps.append(Step(raw.get("label", f"{i + 1}. group {g.signer}"), "group", g, expect, fails, row))
            elif "announce" in raw:
                a = raw["announce"]
                auth = Authorization(a["signer"], parse_payload(a["payload"]), parse_predicate(a.get("predicate")), bool(a.get("multi_use", False)))
                steps.append(Step(raw.get("label", f"{i + 1}. announce {a['signer']}"), "announce", auth, expect, fails, row, auth))
            else:
                raise ParseError(f"step {i} has none of tx, group, announce")
        checks = tuple(data.get("checks", ()))
        unknown = [c for c in checks if c not in CHECKS]
        if unknown:
            raise ParseError(f"unknown checks {unknown}")
        mode = meta.get("authorization", "implicit")
        if mode not in ("implicit", "explicit"):
            raise ParseError(f"authorization must be implicit or explicit, got {mode!r}")
        return Scenario(meta.get("name", "scenario"), params, initial, steps, checks, mode, meta)
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as exc:
        raise ParseError(f"malformed scenario: {exc!r}") from exc


def load_scenario(path: str | os.PathLike) -> Scenario:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return parse_scenario(raw)


# ---------------------------------------------------------------- display comparison


def decimals_of(text: str) -> int:
    text = text.strip().rstrip("%")
    return len(text.split(".", 1)[1]) if "." in text else 0


def round_half_up(q: Fraction, places: int) -> Fraction:
    scale = 10**places
    return Fraction(math.floor(q * scale + Fraction(1, 2)), scale)


def displayed_match(actual, expected: str) -> bool:
    """``actual`` shown at the precision of ``expected`` equals it.

    ``"-"`` means zero or absent. A fraction such as ``"1800/19"`` is compared exactly.
    """
    text = str(expected).strip()
    if text in ("-", "--", "inf"):
        return actual is None or actual == 0 or actual == math.inf
    if actual is None or actual == math.inf:
        return False
    if "/" in text:
        return Fraction(actual) == parse_rational(text)
    pct = text.endswith("%")
    value = Fraction(actual) * (100 if pct else 1)
    return round_half_up(value, decimals_of(text)) == parse_rational(text.rstrip("%"))


def format_display(q, precision: int) -> str:
    if q is None:
        return "-"
    if q == math.inf:
        return "inf"
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    r = round_half_up(q, precision)
    sign = "-" if r < 0 else ""
    r = abs(r)
    whole = math.floor(r)
    frac = r - whole
    digits = str(int(frac * 10**precision)).rjust(precision, "0")
    return f"{sign}{whole}.{digits}" if precision > 0 else f"{sign}{whole}"


def _fmt_actual(v) -> str:
    if v is None:
        return "-"
    if v == math.inf:
        return "inf"
    return format_rational(v)


# ---------------------------------------------------------------- replay


@dataclass(frozen=True)
class Divergence:
    step: int
    label: str
    field: str
    expected: str
    actual: str


@dataclass
class StepResult:
    index: int
    label: str
    ok: bool
    error: str | None = None
    divergences: list[Divergence] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


@dataclass
class ReplayReport:
    name: str
    params: Params
    initial: Configuration
    states: list[Configuration]
    labels: list[str]
    results: list[StepResult]

    @property
    def divergences(self) -> list[Divergence]:
        return [d for r in self.results for d in r.divergences]

    @property
    def violations(self) -> list[str]:
        return [v for r in self.results for v in r.violations]

    @property
    def notes(self) -> list[str]:
        return [n for r in self.results for n in r.notes]

    @property
    def passed(self) -> bool:
        return not self.divergences and not self.violations

    @property
    def first_divergence(self) -> Divergence | None:
        d = self.divergences
        return d[0] if d else None

    @property
    def final(self) -> Configuration:
        return self.states[-1] if self.states else self.initial

    def summary(self) -> str:
        lines = [f"scenario {self.name}: {'PASS' if self.passed else 'FAIL'} ({len(self.results)} steps)"]
        for r in self.results:
            mark = "ok " if r.ok and not r.divergences and not r.violations else "BAD"
            extra = f" [{r.error}]" if r.error else ""
            lines.append(f"  {mark} {r.label}{extra}")
            for d in r.divergences:
                lines.append(f"      {d.field}: expected {d.expected}, got {d.actual}")
            for v in r.violations:
                lines.append(f"      violation {v}")
            for n in r.notes:
                lines.append(f"      note {n}")
        fd = self.first_divergence
        if fd is not None:
            lines.append(f"first divergence: step {fd.step} ({fd.label}) {fd.field}: expected {fd.expected}, got {fd.actual}")
        return "\n".join(lines)


def _lookup(cfg: Configuration, params: Params, kind: str, key: str, sub: str | None, row: int | None):
    if kind == "wallets":
        return cfg.balance(key, parse_token(sub))
    if kind == "funds":
        return cfg.lp.fund(_free(key))
    if kind == "loans":
        return cfg.lp.loan(key, _free(sub))
    if kind == "minted":
        return cfg.lp.supply_of(_free(key))
    if kind == "prices":
        return cfg.oracle.get(_free(key))
    if kind == "coll":
        return collateralization(cfg, key, params.lp)
    if kind == "util":
        return utilization(cfg.lp, _free(key))
    if kind == "er":
        return exchange_rate(cfg.lp, _free(key))
    if kind == "rates":
        nxt = (row if row is not None else 0) + 1
        try:
            return params.lp.interest.rate(_free(key), nxt, cfg.lp)
        except DefiError:
            return None
    if kind == "amm":
        t = parse_token(key)
        if not isinstance(t, AmmMinted):
            raise ParseError(f"amm expectation key must be a pair token, got {key!r}")
        ps = cfg.amm.pairs.get(t.pair)
        if ps is None:
            return None
        return {"r0": ps.r0, "r1": ps.r1, "supply": ps.supply}[sub]
    raise ParseError(f"unknown expectation field {kind!r}")


def compare_expect(cfg: Configuration, params: Params, expect: dict, index: int, label: str, row: int | None) -> list[Divergence]:
    out = []
    for kind, entries in expect.items():
        if not isinstance(entries, dict):
            raise ParseError(f"expectation {kind!r} must map keys to values")
        for key, val in entries.items():
            pairs = val.items() if isinstance(val, dict) else [(None, val)]
            for sub, expected in pairs:
                actual = _lookup(cfg, params, kind, key, sub, row)
                if not displayed_match(actual, str(expected)):
                    name = f"{kind}.{key}" + (f".{sub}" if sub else "")
                    out.append(Divergence(index, label, name, str(expected), _fmt_actual(actual)))
    return out


def _run(ns: NetworkState, step: Step, mode: str) -> NetworkState:
    if step.kind == "announce":
        return announce(ns, step.auth)
    if mode == "implicit" and not (step.kind == "tx" and isinstance(step.payload, (Int, Px))):
        ns = announce(ns, Authorization(step.payload.signer, step.payload))
    if step.kind == "group":
        return execute_group(ns, step.payload)
    return execute_tx(ns, step.payload)


def _waivable(exc: DefiError) -> bool:
    if isinstance(exc, AtomicityFailure):
        exc = exc.inner
    return isinstance(exc, WAIVABLE)


def replay_scenario(sc: Scenario, strict: bool = False) -> ReplayReport:
    """Run every step, compare expectations and check invariants.

    Without ``strict``, a liquidation rejected only for its seizure amount or
    for overshooting the minimum collateralization is re-run with those two
    premises waived, and the waiver is recorded as a note.
    """
    ns = NetworkState(sc.initial, sc.params)
    waived_params = replace(sc.params, lp=replace(sc.params.lp, waive=frozenset({5, 7})))
    checks = tuple(dict.fromkeys(DEFAULT_CHECKS + sc.checks))
    states, labels, results = [], [], []
    for i, st in enumerate(sc.steps, start=1):
        res = StepResult(i, st.label, True)
        pre = ns
        try:
            try:
                ns = _run(ns, st, sc.authorization)
            except DefiError as exc:
                if strict or st.fails or not _waivable(exc):
                    raise
                ns = _run(replace(ns, params=waived_params), st, sc.authorization)
                ns = replace(ns, params=sc.params)
                res.notes.append(f"retried with premises 5 and 7 waived after {exc.kind}")
            if st.fails:
                res.ok = False
                res.error = f"expected {st.fails}, but the step succeeded"
                res.divergences.append(Divergence(i, st.label, "fails", st.fails, "success"))
        except DefiError as exc:
            inner = exc.inner if isinstance(exc, AtomicityFailure) else exc
            if st.fails and st.fails in (exc.kind, inner.kind):
                res.notes.append(f"rejected as expected: {exc.kind}: {exc}")
            else:
                res.ok = False
                res.error = f"{exc.kind}: {exc}"
                res.divergences.append(Divergence(i, st.label, "error", st.fails or "success", exc.kind))
            ns = pre
        res.notes.extend(ns.notes[len(pre.notes) :])
        if st.kind != "announce":
            payload = st.payload
            res.violations.extend(check_step(pre.cfg, ns.cfg, payload, sc.params, checks))
        res.divergences.extend(compare_expect(ns.cfg, sc.params, st.expect, i, st.label, st.row))
        states.append(ns.cfg)
        labels.append(st.label)
        results.append(res)
    return ReplayReport(sc.name, sc.params, sc.initial, states, labels, results)


def replay(path_or_data, strict: bool = False) -> ReplayReport:
    if isinstance(path_or_data, (dict, str, bytes)) and not (isinstance(path_or_data, str) and os.path.exists(path_or_data)):
        sc = parse_scenario(path_or_data)
    else:
        sc = load_scenario(path_or_data)
    return replay_scenario(sc, strict)


# ---------------------------------------------------------------- table rendering


def _nz(q):
    return q if q else None


def _columns(report: ReplayReport) -> list[tuple[str, Any]]:
    states = [report.initial, *report.states]
    cols: list[tuple[str, Any]] = []
    users = sorted({u for s in states for u in s.wallets})
    for u in users:
        toks = sorted({t for s in states for t in s.wallets.get(u, {})}, key=token_key)
        for t in toks:
            cols.append((f"σ{u}[{t}]", lambda c, u=u, t=t: _nz(c.balance(u, t))))
    funds = sorted({t for s in states for t in s.lp.funds}, key=token_key)
    for t in funds:
        cols.append((f"π_f[{t}]", lambda c, t=t: _nz(c.lp.fund(t))))
    borrowers = sorted({u for s in states for u in s.lp.loans})
    for u in borrowers:
        toks = sorted({t for s in states for t in s.lp.loans.get(u, {})}, key=token_key)
        for t in toks:
            cols.append((f"π_l {u}[{t}]", lambda c, u=u, t=t: _nz(c.lp.loan(u, t))))
    minted = sorted({t for s in states for t in s.lp.minted}, key=token_key)
    for t in minted:
        cols.append((f"π_m[{t}']", lambda c, t=t: _nz(c.lp.supply_of(t))))
    pairs = sorted({k for s in states for k in s.amm.pairs}, key=lambda k: (k[0].name, k[1].name))
    for a, b in pairs:
        cols.append((f"r[{a}]", lambda c, k=(a, b): c.amm.pairs[k].r0 if k in c.amm.pairs else None))
        cols.append((f"r[{b}]", lambda c, k=(a, b): c.amm.pairs[k].r1 if k in c.amm.pairs else None))
    priced = sorted({t for s in states for t in s.oracle}, key=token_key)
    for t in priced:
        if len({s.oracle.get(t) for s in states}) > 1:
            cols.append((f"p[{t}]", lambda c, t=t: c.oracle.get(t)))
    for u in borrowers:
        cols.append((f"Coll {u}", lambda c, u=u: collateralization(c, u, report.params.lp) if c.lp.has_loan(u) else None))
    return cols


def emit_table(report: ReplayReport, precision: int | None = None) -> str:
    """Render the trace one row per step, one column per balance."""
    if precision is None:
        precision = int(os.environ.get("DEFI_SEM_PRECISION", "2"))
    cols = _columns(report)
    header = ["Actions"] + [name for name, _ in cols]
    rows = [header]
    if report.results:
        rows.append(["0. initial"] + [format_display(f(report.initial), precision) for _, f in cols])
    for label, cfg in zip(report.labels, report.states):
        rows.append([label] + [format_display(f(cfg), precision) for _, f in cols])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for n, r in enumerate(rows):
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if n == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------- serialization


def tx_to_json(tx) -> list:
    q = format_rational
    if isinstance(tx, Px):
        return ["Px", {str(t): q(p) for t, p in tx.prices}]
    if isinstance(tx, Int):
        return ["Int", tx.step]
    if isinstance(tx, Liq):
        out = ["Liq", tx.liquidator, tx.borrower, q(tx.amount), str(tx.token), str(tx.seized_token)]
        if tx.seized is not None:
            out.append(q(tx.seized))
        return out
    if isinstance(tx, (Trf, Mtrf)):
        return [type(tx).__name__, tx.sender, tx.receiver, q(tx.amount), str(tx.token)]
    if isinstance(tx, FRepayM):
        return ["FRepayM", tx.user, q(tx.amount), str(tx.token), q(tx.fee), str(tx.fee_token)]
    if isinstance(tx, AmmDep):
        return ["AmmDep", tx.user, q(tx.v0), str(tx.t0), q(tx.v1), str(tx.t1)]
    if isinstance(tx, AmmSwap):
        return ["AmmSwap", tx.user, str(tx.token_in), str(tx.token_out), q(tx.amount_in)]
    if isinstance(tx, Dep):
        return [type(tx).__name__, tx.user, q(tx.amount), str(tx.token)]
    raise TypeError(f"cannot serialize {tx!r}")


def configuration_to_json(cfg: Configuration) -> dict:
    q = format_rational
    return {
        "wallets": {u: {str(t): q(a) for t, a in sorted(w.items(), key=lambda kv: token_key(kv[0]))} for u, w in sorted(cfg.wallets.items())},
        "funds": {str(t): q(a) for t, a in sorted(cfg.lp.funds.items(), key=lambda kv: kv[0].name)},
        "loans": {u: {str(t): q(a) for t, a in sorted(l.items(), key=lambda kv: kv[0].name)} for u, l in sorted(cfg.lp.loans.items())},
        "minted": {str(t): q(a) for t, a in sorted(cfg.lp.minted.items(), key=lambda kv: kv[0].name)},
        "prices": {str(t): q(a) for t, a in sorted(cfg.oracle.items(), key=lambda kv: kv[0].name)},
        "amm": [
            {"t0": str(a), "t1": str(b), "r0": q(ps.r0), "r1": q(ps.r1), "supply": q(ps.supply)}
            for (a, b), ps in sorted(cfg.amm.pairs.items(), key=lambda kv: (kv[0][0].name, kv[0][1].name))
        ],
    }


def params_to_meta(params: Params, name: str) -> dict:
    lp = params.lp
    meta: dict = {
        "name": name,
        "c_min": format_rational(lp.c_min),
        "r_liq": format_rational(lp.r_liq),
        "amm_fee": format_rational(params.swap.fee),
        "flash_fee": format_rational(params.flash.c_fee),
        "oracle_source": lp.oracle_source,
    }
    if lp.anchor is not None:
        meta["anchor"] = str(lp.anchor)
    it = lp.interest
    if isinstance(it, Constant):
        meta["interest"] = {"model": "constant", "rates": {str(t): format_rational(r) for t, r in it.rates.items()}}
        if it.default is not None:
            meta["interest"]["default"] = format_rational(it.default)
    elif isinstance(it, Schedule):
        meta["interest"] = {
            "model": "schedule",
            "steps": {str(k): {str(t): format_rational(r) for t, r in row.items()} for k, row in it.steps.items()},
        }
    else:
        meta["interest"] = {"model": "utilization", "base": format_rational(it.base), "slope": format_rational(it.slope)}
    return meta


def _wallet_expect(cfg: Configuration, users) -> dict:
    return {u: {str(t): format_rational(a) for t, a in cfg.wallets.get(u, {}).items()} for u in users}


def attack_to_scenario(trace, params: Params, users: tuple[str, ...] = ()) -> dict:
    """Golden scenario for an attack trace: exact final wallets of ``users`` at the last step."""
    steps = [{"label": f"{i}. {type(tx).__name__}", "tx": tx_to_json(tx)} for i, tx in enumerate(trace.steps, start=1)]
    if steps and users:
        steps[-1]["expect"] = {"wallets": _wallet_expect(trace.final, users)}
    return {
        "meta": {
            **params_to_meta(params, f"attack-{trace.label}"),
            "attack": {
                "label": trace.label,
                "attacker_gain": format_rational(trace.attacker_gain),
                "victim_loss": format_rational(trace.victim_loss),
                "measure": trace.measure,
            },
        },
        "initial": configuration_to_json(trace.initial),
        "steps": steps,
        "checks": [],
    }


def safety_to_json(report) -> dict:
    def v(x):
        return "inf" if x == math.inf else format_rational(x)

    return {
        "epsilon_ratio": v(report.epsilon_ratio),
        "strong_epsilon_ratio": v(report.strong_epsilon_ratio),
        "per_user": {
            u: {"coll": v(a.coll), "loanVal": v(a.loan_val), "collVal": v(a.coll_val), "nrLoanVal": v(a.nr_loan_val)}
            for u, a in sorted(report.per_user.items())
        },
    }


__all__ = [
    "Divergence",
    "ReplayReport",
    "Scenario",
    "Step",
    "StepResult",
    "attack_to_scenario",
    "compare_expect",
    "configuration_to_json",
    "displayed_match",
    "emit_table",
    "format_display",
    "load_scenario",
    "parse_configuration",
    "parse_scenario",
    "parse_tx",
    "replay",
    "replay_scenario",
    "round_half_up",
    "safety_to_json",
    "tx_to_json",
]
