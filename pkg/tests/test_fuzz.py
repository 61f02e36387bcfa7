from __future__ import annotations

import random

import pytest

from defisem import fuzz as fz
from defisem import invariants
from defisem.engine import Dep
from defisem.fuzz import (
    PROFILES,
    Profile,
    check_item,
    fuzz,
    random_configuration,
    random_group,
    random_states,
    shrink,
)
from defisem.ledger import supply


def test_same_seed_same_report():
    a, b = fuzz(7, 30, "full", traces=5), fuzz(7, 30, "full", traces=5)
    assert a == b
    assert fuzz(8, 30, "full", traces=5) != a


@pytest.mark.parametrize("profile", sorted(PROFILES))
def test_profiles_are_clean_on_a_short_run(profile):
    traces = 3 if profile == "amm-fee" else 20
    report = fuzz(1, 30, profile, traces=traces)
    assert report.passed, report.summary()
    assert report.accepted > 0 and report.accepted + report.rejected == traces * 30


def test_unknown_profile():
    with pytest.raises(ValueError):
        fuzz(0, 1, "nope")


def test_random_configuration_is_consistent():
    rng = random.Random(3)
    for name in PROFILES:
        cfg = random_configuration(rng, PROFILES[name])
        assert invariants.minted_supply(cfg) == []
        assert all(supply(cfg, t) > 0 for t in fz.TOKENS)


def test_random_states_are_reachable_and_deterministic():
    a = list(random_states(2, 5))
    assert a == list(random_states(2, 5)) and len(a) == 5


def test_injected_bug_is_found_and_shrunk(monkeypatch):
    monkeypatch.setitem(
        invariants.CHECKS, "bug", lambda pre, post, tx, params: ["bug: deposit seen"] if isinstance(tx, Dep) else []
    )
    monkeypatch.setitem(PROFILES, "buggy", Profile("buggy", PROFILES["lp"].kinds, ("bug",)))
    report = fuzz(0, 40, "buggy", traces=2)
    assert not report.passed
    for v in report.violations:
        assert v.check == "bug"
        assert len(v.shrunk) == 1 and isinstance(v.shrunk[0], Dep)


def test_shrink_leaves_a_clean_trace_alone():
    params = PROFILES["lp"].params()
    rng = random.Random(5)
    cfg = random_configuration(rng, PROFILES["lp"])
    items = [fz.random_tx(rng, cfg, params, PROFILES["lp"], i) for i in range(10)]
    # removal is only kept while the violation persists
    assert shrink(cfg, params, items, "supply", invariants.DEFAULT_CHECKS) == tuple(items)


def test_mutated_groups_are_rejected_and_leave_no_trace():
    prof = PROFILES["full"]
    params = prof.params()
    rng = random.Random(11)
    seen = 0
    while seen < 50:
        cfg = random_configuration(rng, prof)
        g = random_group(rng, cfg, params, mutate=True)
        if g is None:
            continue
        post, vs = check_item(cfg, params, g, prof.checks)
        assert post is None and vs == []
        seen += 1
