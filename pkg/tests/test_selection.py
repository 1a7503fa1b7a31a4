import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from fedsim.errors import ConfigError, ProtocolError
from fedsim.selection import (CountTable, GroupAssignment, GroupedCountSelector, SelectionPolicy,
                              mbie_weight, regroup, select_devices, write_trace_csv)


def test_regroup_even_split():
    g = regroup(range(10), 5, np.random.default_rng(0))
    assert [len(x) for x in g.groups] == [2] * 5
    assert sorted(sum(g.groups, [])) == list(range(10))


def test_regroup_near_equal_sizes():
    g = regroup(range(7), 3, np.random.default_rng(1))
    assert sorted(len(x) for x in g.groups) == [2, 2, 3]


def test_regroup_deterministic():
    a = regroup(range(20), 4, np.random.default_rng(5))
    b = regroup(range(20), 4, np.random.default_rng(5))
    assert a.groups == b.groups


def test_regroup_rejects_k_above_n():
    with pytest.raises(ConfigError):
        regroup(range(3), 4, np.random.default_rng(0))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 80), data=st.data())
def test_regroup_partition_property(n, data):
    k = data.draw(st.integers(1, n))
    g = regroup(range(n), k, np.random.default_rng(data.draw(st.integers(0, 2**31))))
    sizes = [len(x) for x in g.groups]
    assert len(sizes) == k and min(sizes) >= 1 and max(sizes) - min(sizes) <= 1
    assert sorted(sum(g.groups, [])) == list(range(n))


def test_mbie_weight():
    assert mbie_weight(4) == 0.5
    assert mbie_weight(1) == 1.0
    assert mbie_weight(0) == math.inf


def test_fresh_table_selects_unvisited_uniformly():
    groups = GroupAssignment([[0, 1, 2], [3, 4, 5]])
    hits = Counter()
    for trial in range(3000):
        rng = np.random.default_rng(trial)
        sel, table = select_devices(groups, CountTable.zeros(6, 2), 0, 2, SelectionPolicy(0.5), rng)
        assert table.counts[sel[0], 0] == 1 and table.counts[sel[1], 0] == 1
        assert table.total() == 2
        hits.update(sel)
    for dev in range(6):
        assert hits[dev] / 3000 == pytest.approx(1 / 3, abs=0.04)


def test_greedy_prefers_lower_count():
    table = CountTable(np.array([[4], [1]]))
    sel, _ = select_devices(GroupAssignment([[0, 1]]), table, 0, 1, SelectionPolicy(1.0),
                            np.random.default_rng(0))
    assert sel == [1]


def test_greedy_tie_breaks_to_lowest_id():
    table = CountTable(np.array([[2], [1], [1]]))
    for s in range(50):
        sel, _ = select_devices(GroupAssignment([[0, 2, 1]]), table, 0, 1, SelectionPolicy(1.0),
                                np.random.default_rng(s))
        assert sel == [1]


def test_weighted_sampling_frequencies():
    table = CountTable(np.array([[4], [1]]))
    groups = GroupAssignment([[0, 1]])
    rng = np.random.default_rng(2024)
    draws = 100_000
    hits = sum(select_devices(groups, table, 0, 1, SelectionPolicy(0.0), rng)[0][0] == 1
               for _ in range(draws))
    # weights 0.5 and 1.0 -> P(b) = 1.0 / 1.5
    assert hits / draws == pytest.approx(2 / 3, abs=0.01)


def test_weighted_sampling_chi_square():
    counts = np.array([[1], [4], [9], [16], [2]])
    w = 1 / np.sqrt(counts[:, 0])
    expected_p = w / w.sum()
    groups = GroupAssignment([[0, 1, 2, 3, 4]])
    rng = np.random.default_rng(7)
    obs = np.zeros(5)
    for _ in range(100_000):
        obs[select_devices(groups, CountTable(counts), 0, 1, SelectionPolicy(0.0), rng)[0][0]] += 1
    assert chisquare(obs, expected_p * obs.sum()).pvalue > 0.001


def test_slot_is_round_mod_k():
    groups = GroupAssignment([[0, 1], [2, 3], [4, 5]])
    table = CountTable.zeros(6, 3)
    _, t = select_devices(groups, table, 7, 3, SelectionPolicy(0.5), np.random.default_rng(0))
    assert t.counts[:, 1].sum() == 3 and t.counts[:, [0, 2]].sum() == 0
    assert table.total() == 0  # input left untouched


def test_empty_group_is_invariant_violation():
    with pytest.raises(ProtocolError):
        select_devices(GroupAssignment([[0], []]), CountTable.zeros(2, 2), 0, 2,
                       SelectionPolicy(0.5), np.random.default_rng(0))


def test_epsilon_one_visits_zero_cells_first():
    """Under pure greedy, a zero cell always beats a cell that is already >= 1."""
    n, k = 8, 4
    sel = GroupedCountSelector(n, k, SelectionPolicy(1.0, lam=1000), np.random.default_rng(1),
                               np.random.default_rng(2))
    for r in range(4 * k):
        before = sel.table.counts.copy()
        picked = sel.select(r)
        slot = r % k
        for g, dev in zip(sel.groups.groups, picked):
            if any(before[d, slot] == 0 for d in g):
                assert before[dev, slot] == 0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 30), eps=st.floats(0, 1), lam=st.integers(1, 3), seed=st.integers(0, 2**31), data=st.data())
def test_selector_invariants(n, eps, lam, seed, data):
    k = data.draw(st.integers(1, n))
    sel = GroupedCountSelector(n, k, SelectionPolicy(eps, lam), np.random.default_rng(seed),
                               np.random.default_rng(seed + 1))
    prev_groups = None
    for r in range(3 * lam * k):
        picked = sel.select(r)
        assert len(picked) == k
        assert all(dev in grp for dev, grp in zip(picked, sel.groups.groups))
        assert sel.table.total() == k * (r + 1)
        if r % (lam * k) != 0:
            assert sel.groups.groups == prev_groups
        prev_groups = [list(g) for g in sel.groups.groups]


def test_regroup_cadence_changes_only_on_boundaries():
    sel = GroupedCountSelector(20, 4, SelectionPolicy(0.5, lam=2), np.random.default_rng(0),
                               np.random.default_rng(1))
    formed = []
    for r in range(24):
        sel.select(r)
        formed.append(sel.groups.formed_at_round)
    assert sorted(set(formed)) == [0, 8, 16]


def test_trace_csv(tmp_path):
    sel = GroupedCountSelector(6, 2, SelectionPolicy(0.5), np.random.default_rng(0), np.random.default_rng(1))
    for r in range(3):
        sel.select(r)
    write_trace_csv(tmp_path / "t.csv", sel.trace)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "round,slot,group,device,greedy"
    assert len(lines) == 1 + 6
