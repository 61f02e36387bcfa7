from __future__ import annotations

import json

import pytest

from defisem.cli import main


@pytest.mark.parametrize("name", ["table2", "table8", "table9", "amm_example"])
def test_replay_passes(name, capsys):
    assert main(["replay", f"scenarios/{name}.json"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_replay_divergence_exits_one(capsys):
    assert main(["replay", "scenarios/tables3to7.json"]) == 1
    assert "first divergence" in capsys.readouterr().out


def test_bad_input_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["replay", str(bad)]) == 2
    assert main(["table", str(tmp_path / "missing.json")]) == 2


def test_table_output(capsys):
    assert main(["table", "scenarios/table9.json", "--precision", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("Actions") and "0. initial" in out[2]


def test_fuzz_command(capsys):
    assert main(["fuzz", "--seed", "3", "--steps", "20", "--traces", "3", "--profile", "full"]) == 0
    assert "violations=0" in capsys.readouterr().out


def test_attack_emits_replayable_scenario(tmp_path, capsys):
    assert main(["attack", "over-utilization", "--scenario", "scenarios/table9.json"]) == 0
    captured = capsys.readouterr()
    data = json.loads(captured.out)
    assert data["meta"]["attack"]["victim_loss"] == "50"
    path = tmp_path / "golden.json"
    path.write_text(captured.out)
    assert main(["replay", str(path)]) == 0


def test_attack_sandwich_and_liquidation(capsys):
    # final reserves (1620/19, 95); front 5 τ1 gets 81/19 τ0, victim 10, back-run returns 1210/201 τ1
    assert main(["attack", "sandwich", "--scenario", "scenarios/amm_example.json", "--at", "final",
                 "--attacker", "A", "--victim", "B", "--token-in", "τ1", "--token-out", "τ0",
                 "--amount", "10", "--probe", "5"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["meta"]["attack"]["attacker_gain"] == "205/201"
    assert main(["attack", "liquidation", "--scenario", "scenarios/table8.json", "--attacker", "A"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"objective", "plan", "transactions", "safety"} and out["plan"] == {}
    # after the price move of step 1 both borrowers are liquidatable
    assert main(["attack", "liquidation", "--scenario", "scenarios/table8.json", "--at", "1", "--attacker", "A"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["plan"]) == {"B", "C"} and out["transactions"]
    assert main(["attack", "arbitrage", "--scenario", "scenarios/table8.json", "--at", "99"]) == 2


def test_inapplicable_attack_exits_one(capsys):
    assert main(["attack", "price-oracle", "--scenario", "scenarios/table9.json", "--victim", "Q"]) == 1
    assert "not applicable" in capsys.readouterr().err
