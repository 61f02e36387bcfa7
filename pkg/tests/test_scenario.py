from __future__ import annotations

import json
from pathlib import Path

import pytest

from defisem.engine import Params
from defisem.errors import ParseError
from defisem.scenario import (
    configuration_to_json,
    displayed_match,
    emit_table,
    format_display,
    load_scenario,
    parse_configuration,
    parse_scenario,
    parse_tx,
    params_to_meta,
    parse_params,
    replay,
    round_half_up,
    tx_to_json,
)

from helpers import F

SCENARIOS = sorted(Path("scenarios").glob("*.json"))


@pytest.mark.parametrize(
    "bad",
    [
        "{not json",
        "[]",
        {"steps": [{"label": "x"}]},
        {"steps": [{"tx": ["Fly", "A", "1", "τ0"]}]},
        {"steps": [{"tx": ["Dep", "A", "abc", "τ0"]}]},
        {"initial": {"wallets": {"A": {"τ0": "-1"}}}},
        {"checks": ["nonsense"]},
        {"meta": {"authorization": "sometimes"}},
    ],
)
def test_malformed_input_is_a_parse_error(bad):
    data = bad if isinstance(bad, str) else json.dumps(bad)
    with pytest.raises(ParseError):
        parse_scenario(data)


def test_missing_file_is_a_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "absent.json")


def test_display_rounding_is_half_up_at_written_precision():
    assert round_half_up(F(153, 150), 2) == F(102, 100)
    assert round_half_up(F(1, 200), 2) == F(1, 100)
    assert displayed_match(F(153, 150), "1.02")
    assert not displayed_match(F(153, 150), "1.03")
    assert displayed_match(F(1800, 19), "1800/19")
    assert displayed_match(F(0), "-") and displayed_match(None, "-")
    assert displayed_match(F(1, 2), "50%")
    assert format_display(F(153, 150), 2) == "1.02"
    assert format_display(F(-1, 3), 3) == "-0.333"
    assert format_display(F(7), 2) == "7"


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_every_shipped_scenario_replays_without_invariant_violations(path):
    report = replay(path)
    assert not report.violations
    assert len(report.states) == len(report.results)


@pytest.mark.parametrize("name", ["table2", "table8", "table9", "amm_example"])
def test_scenarios_match_their_tables(name):
    report = replay(f"scenarios/{name}.json")
    assert report.passed, report.summary()


def test_running_example_diverges_and_names_the_first_cell():
    report = replay("scenarios/tables3to7.json")
    assert not report.passed
    fd = report.first_divergence
    assert fd is not None and "first divergence" in report.summary()


def test_table2_needs_the_waiver_in_strict_mode():
    assert replay("scenarios/table2.json").notes
    assert not replay("scenarios/table2.json", strict=True).passed


def test_empty_trace_passes_and_renders_header_only():
    report = replay({"initial": {"wallets": {"A": {"τ0": "1"}}}, "steps": []})
    assert report.passed and report.final == report.initial
    table = emit_table(report)
    assert len(table.splitlines()) == 2 and table.startswith("Actions")


def test_replay_is_deterministic():
    a = emit_table(replay("scenarios/tables3to7.json"))
    b = emit_table(replay("scenarios/tables3to7.json"))
    assert a == b
    assert replay("scenarios/table8.json").summary() == replay("scenarios/table8.json").summary()


def test_expected_failure_steps():
    data = {
        "initial": {"wallets": {"A": {"τ0": "1"}}, "prices": {"τ0": "1"}},
        "steps": [{"tx": ["Dep", "A", "5", "τ0"], "fails": "InsufficientBalance"}],
    }
    assert replay(data).passed
    data["steps"][0]["fails"] = "Undercollateralized"
    assert not replay(data).passed
    data["steps"][0] = {"tx": ["Dep", "A", "1", "τ0"], "fails": "InsufficientBalance"}
    assert not replay(data).passed


def test_configuration_round_trip():
    for path in SCENARIOS:
        cfg = replay(path).final
        assert parse_configuration(configuration_to_json(cfg)) == cfg


@pytest.mark.parametrize(
    "arr",
    [
        ["Dep", "A", "3/2", "τ0"],
        ["Rdm", "A", "1", "τ0'"],
        ["Liq", "A", "B", "13", "τ0", "τ1'", "19"],
        ["Liq", "A", "B", "13", "τ0", "τ1'"],
        ["Px", {"τ0": "1", "τ1": "17/10"}],
        ["Int", 3],
        ["Trf", "A", "B", "1", "τ0"],
        ["Mtrf", "A", "B", "1", "τ0'"],
        ["AmmDep", "A", "10", "τ0", "20", "τ1"],
        ["AmmSwap", "A", "τ0", "τ1", "5"],
        ["AmmRdm", "A", "5", "τ0|τ1"],
        ["FRepayM", "A", "5", "τ0'", "1/2", "τ0'"],
    ],
)
def test_transaction_round_trip(arr):
    tx = parse_tx(arr)
    assert parse_tx(tx_to_json(tx)) == tx


def test_params_round_trip():
    for path in SCENARIOS:
        params = load_scenario(path).params
        assert parse_params(params_to_meta(params, "x")) == params
    assert parse_params({}) == Params()
