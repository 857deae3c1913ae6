import numpy as np
import pytest
from hypothesis import given, strategies as st

from repfl.attack import (
    AttackPlan,
    flip_label,
    manifest_csv,
    poison_federation,
    poison_node,
    select_targets,
    swap_features,
)
from repfl.dataset import Dataset
from repfl.risk import RiskAnnotatedDataset
from repfl.xai import ImportanceReport


def annotated(rng, n, d=3, C=4):
    data = Dataset(rng.standard_normal((n, d)), rng.integers(1, C + 1, n), C)
    risk = rng.integers(1, max(2, n // 3) + 1, n)
    # relabel to a contiguous range
    _, risk = np.unique(risk, return_inverse=True)
    return RiskAnnotatedDataset(data, risk + 1)


REPORT = ImportanceReport(np.array([0.1, 0.5, -0.2]), 0.9, 1, 0)


def test_flip_examples():
    assert [flip_label(y, 4) for y in (4, 1, 2, 3)] == [1, 2, 3, 4]
    with pytest.raises(ValueError):
        flip_label(5, 4)


@given(C=st.integers(2, 12))
def test_flip_is_a_cyclic_derangement(C):
    for y in range(1, C + 1):
        assert flip_label(y, C) != y
        z = y
        for _ in range(C):
            z = flip_label(z, C)
        assert z == y


def test_swap_examples():
    x = np.array([10.0, 20.0, 30.0])
    assert swap_features(x, 1, 3).tolist() == [30.0, 20.0, 10.0]
    assert swap_features(x, 2, 2).tolist() == x.tolist()
    assert x.tolist() == [10.0, 20.0, 30.0]
    with pytest.raises(IndexError):
        swap_features(x, 0, 1)


@given(x=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6), data=st.data())
def test_swap_is_an_involution_preserving_values(x, data):
    d = len(x)
    i, j = data.draw(st.integers(1, d)), data.draw(st.integers(1, d))
    once = swap_features(np.array(x), i, j)
    assert sorted(once.tolist()) == sorted(x)
    assert swap_features(once, i, j).tolist() == x


def test_budget_resolution():
    plan = AttackPlan((True,), budget_fraction=0.2)
    assert plan.alpha(50) == 10 and plan.alpha(40) == 8 and plan.alpha(41) == 9
    assert AttackPlan((True,), budget=100).alpha(7) == 7
    with pytest.raises(ValueError):
        AttackPlan((True,), budget=3, budget_fraction=0.2)
    with pytest.raises(ValueError):
        AttackPlan((True,))
    with pytest.raises(ValueError):
        AttackPlan((True,), budget_fraction=1.5)


def test_unflagged_or_zero_budget_is_identity():
    a = annotated(np.random.default_rng(0), 20)
    assert poison_node(a, REPORT, False, 5)[0] == a.strip()
    assert poison_node(a, REPORT, True, 0)[0] == a.strip()


def test_full_budget_changes_every_label():
    a = annotated(np.random.default_rng(1), 15)
    out, manifest = poison_node(a, REPORT, True, 99)
    assert np.all(out.y != a.data.y) and len(manifest) == 15


def test_fraction_of_fifty_flips_ten():
    a = annotated(np.random.default_rng(2), 50)
    plan = AttackPlan((True,), budget_fraction=0.2)
    out, _ = poison_node(a, REPORT, True, plan.alpha(50))
    assert int(np.sum(out.y != a.data.y)) == 10


def test_poison_swaps_extreme_features():
    a = annotated(np.random.default_rng(3), 10)
    out, manifest = poison_node(a, REPORT, True, 3, node=4)
    for e in manifest:
        assert (e.node, e.f_max, e.f_min) == (4, 2, 3)
        assert out.X[e.sample_index].tolist() == swap_features(a.data.X[e.sample_index], 2, 3).tolist()


def test_flagged_node_needs_matching_report():
    a = annotated(np.random.default_rng(4), 10)
    with pytest.raises(ValueError):
        poison_node(a, None, True, 2)
    with pytest.raises(ValueError):
        poison_node(a, ImportanceReport(np.zeros(5), 1.0, 1, 0), True, 2)


def independent_selection(risk, alpha):
    ranked = sorted(range(len(risk)), key=lambda i: (risk[i], i))
    return sorted(ranked[:alpha])


@given(seed=st.integers(0, 2**32), n=st.integers(1, 40), alpha=st.integers(0, 50))
def test_selection_matches_independent_sort(seed, n, alpha):
    a = annotated(np.random.default_rng(seed), n)
    assert select_targets(a, alpha).tolist() == independent_selection(a.risk.tolist(), min(alpha, n))


@given(seed=st.integers(0, 2**32), flags=st.lists(st.booleans(), min_size=1, max_size=5), budget=st.integers(0, 12))
def test_federation_accounting(seed, flags, budget):
    rng = np.random.default_rng(seed)
    nodes = [annotated(rng, int(rng.integers(1, 20))) for _ in flags]
    reports = [REPORT if f else None for f in flags]
    out, manifest = poison_federation(nodes, AttackPlan(tuple(flags), budget=budget), reports)
    expected = sum(min(budget, a.data.n) for a, f in zip(nodes, flags) if f)
    assert len(manifest) == expected
    for k, (a, o, f) in enumerate(zip(nodes, out, flags)):
        changed = np.flatnonzero(o.y != a.data.y)
        if not f:
            assert o == a.strip()
        assert changed.tolist() == sorted(e.sample_index for e in manifest if e.node == k)
        for i in changed:
            assert sorted(o.X[i].tolist()) == sorted(a.data.X[i].tolist())


def test_federation_length_mismatch():
    a = annotated(np.random.default_rng(5), 5)
    with pytest.raises(ValueError):
        poison_federation([a], AttackPlan((True, False), budget=1), [REPORT])


def test_manifest_csv():
    a = annotated(np.random.default_rng(6), 6)
    _, manifest = poison_node(a, REPORT, True, 1, node=2)
    lines = manifest_csv(manifest).splitlines()
    assert lines[0] == "node,sample_index,old_label,new_label,f_max,f_min"
    assert lines[1].startswith("2,") and len(lines) == 2
