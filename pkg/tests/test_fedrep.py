import ast
import inspect
import io
import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

import repfl.fedrep as fedrep
from repfl.dataset import Dataset, SyntheticSpec, generate_synthetic, partition, train_test_split
from repfl.fedrep import (
    DegenerateLossError,
    FedConfig,
    NodeState,
    ReputationAudit,
    aggregate_fedavg,
    aggregate_reputation,
    contribution,
    fedavg_weights,
    global_loss,
    initial_model,
    local_update,
    make_nodes,
    relative_improvement,
    reputation_weights,
    run_rounds,
    select_group,
    telemetry_csv,
    update_reputation,
)
from repfl.model import LinearModel, TrainConfig, mean_loss, sgd_step, train_softmax


def models(rng, k, C=4, d=3):
    return [LinearModel(rng.standard_normal((C, d)), rng.standard_normal(C)) for _ in range(k)]


@pytest.fixture
def federation():
    data = generate_synthetic(SyntheticSpec(50, 6, 4, 4.0, 1.0, seed=3))
    train, test = train_test_split(data, 0.2, seed=1)
    return partition(train, 4, "iid", seed=2), test


def test_local_update_is_composition_of_steps(blobs):
    node = NodeState(0, blobs)
    model = LinearModel.zeros(4, 4)
    assert local_update(model, node, TrainConfig()) == sgd_step(model, blobs, TrainConfig())
    cfg = TrainConfig(local_steps=3)
    assert local_update(model, node, cfg) == train_softmax(model, blobs, cfg, 3)
    assert local_update(model, NodeState(1, blobs), cfg) == local_update(model, node, cfg)


def test_local_update_refuses_evicted_node(blobs):
    with pytest.raises(ValueError):
        local_update(LinearModel.zeros(4, 4), NodeState(0, blobs, alive=False), TrainConfig())


def test_contribution_examples(blobs):
    assert relative_improvement(1.0, 0.5) == 0.5
    assert relative_improvement(1.0, 1.2) == pytest.approx(-0.2, abs=1e-15)
    model = LinearModel.zeros(4, 4)
    assert contribution(NodeState(0, blobs), model, model) == 0.0
    with pytest.raises(DegenerateLossError):
        relative_improvement(0.0, 0.0)


def test_contribution_reports_exact_zero_loss():
    data = Dataset([[1.0]], [1], 2)
    perfect = LinearModel([[1e6], [-1e6]], [0.0, 0.0])
    with pytest.raises(DegenerateLossError, match="node 7"):
        contribution(NodeState(7, data), perfect, perfect)


@pytest.mark.parametrize("r, e, e_min, rule, expected", [
    (1.0, 0.2, 0.1, "corrected", 1.0),
    (1.0, 0.05, 0.1, "corrected", 0.5),
    (1.0, 0.05, 0.1, "literal", 0.5),
    (0.8, -0.1, 0.1, "corrected", 0.0),
    (0.8, -0.1, 0.1, "literal", 1.0),
    (0.8, -0.05, 0.1, "corrected", 0.4),
])
def test_reputation_examples(r, e, e_min, rule, expected):
    assert update_reputation(r, e, e_min, rule) == pytest.approx(expected, abs=1e-15)


def test_literal_rule_raw_value_before_clamp():
    assert fedrep.reputation_rule(0.8, -0.1, 0.1, "literal") == pytest.approx(1.6)


def test_reputation_rejects_bad_inputs():
    with pytest.raises(ValueError):
        update_reputation(-0.1, 0.0, 0.1)
    with pytest.raises(ValueError):
        update_reputation(1.0, 0.0, 0.0)


@example(r=0.2, e=6.695705988671154e-211, e_min=0.1875, rule="corrected")
@given(r=st.floats(0, 1), e=st.floats(-2, 1), e_min=st.floats(1e-3, 1), rule=st.sampled_from(fedrep.RULES))
def test_reputation_stays_in_range(r, e, e_min, rule):
    new = update_reputation(r, e, e_min, rule)
    assert 0.0 <= new <= 1.0
    if e > e_min:
        assert new == r
    elif rule == "corrected" or e > 0:
        assert new <= r


def test_select_group_all_qualified(blobs):
    nodes = [NodeState(k, blobs) for k in range(3)]
    group, evicted = select_group(nodes, {0: 0.5, 1: 0.2, 2: 0.3}, FedConfig(e_min=0.1))
    assert group == [0, 1, 2] and evicted == []
    assert [n.reputation for n in nodes] == [1.0, 1.0, 1.0]


def test_select_group_evicts_low_reputation(blobs):
    nodes = [NodeState(0, blobs, reputation=0.25), NodeState(1, blobs)]
    group, evicted = select_group(nodes, {0: -0.5, 1: 0.5}, FedConfig(e_min=0.1, r_min=0.2))
    assert group == [1] and evicted == [0]
    assert not nodes[0].alive and nodes[0].reputation == 0.0


def test_aggregation_examples():
    a, b = LinearModel(np.ones((2, 2)), np.zeros(2)), LinearModel(np.full((2, 2), 5.0), np.ones(2))
    assert reputation_weights([1, 3]).tolist() == [0.25, 0.75]
    assert fedavg_weights([10, 30]).tolist() == [0.25, 0.75]
    assert np.allclose(aggregate_reputation([a, b], [1, 3]).W, 4.0, atol=1e-12)
    assert np.allclose(aggregate_fedavg([a, b], [10, 10]).W, 3.0, atol=1e-12)
    assert aggregate_reputation([b], [0.3]) is b
    assert aggregate_fedavg([a, a], [3, 9]) is a
    with pytest.raises(ValueError):
        reputation_weights([0.0, 0.0])


@given(seed=st.integers(0, 2**32), k=st.integers(1, 6))
def test_weights_sum_to_one(seed, k):
    rng = np.random.default_rng(seed)
    assert abs(reputation_weights(rng.random(k) + 1e-3).sum() - 1) < 1e-9
    assert abs(fedavg_weights(rng.integers(1, 100, k)).sum() - 1) < 1e-9


def test_global_loss_equals_pooled_loss(blobs):
    model = models(np.random.default_rng(0), 1, d=4)[0]
    left, right = blobs.subset(range(0, 30)), blobs.subset(range(30, 100))
    assert global_loss(model, [left, right]) == pytest.approx(mean_loss(model, blobs), abs=1e-12)
    assert global_loss(model, [left]) == mean_loss(model, left)


def test_zero_rounds_return_initial_model(federation):
    nodes, test = federation
    cfg = FedConfig(rounds=0)
    history, model = run_rounds(make_nodes(nodes, cfg), test, cfg)
    assert history == [] and model == initial_model(4, 6, cfg)


def test_single_node_fedavg_equals_centralized(federation):
    nodes, test = federation
    cfg = FedConfig(rounds=15, defense_enabled=False, train=TrainConfig(local_steps=2))
    history, model = run_rounds(make_nodes(nodes[:1], cfg), test, cfg)
    central = initial_model(4, 6, cfg)
    for rec in history:
        central = train_softmax(central, nodes[0], cfg.train, 2)
        assert rec.model == central
    assert model == central


@pytest.mark.parametrize("defense", [False, True])
def test_clean_federation_learns(federation, defense):
    nodes, test = federation
    cfg = FedConfig(rounds=30, defense_enabled=defense)
    history, _ = run_rounds(make_nodes(nodes, cfg), test, cfg)
    assert history[-1].accuracy > 0.85
    for rec in history:
        if rec.weights:
            assert abs(sum(rec.weights.values()) - 1) < 1e-9


def test_threads_do_not_change_results(federation):
    nodes, test = federation
    serial, parallel = FedConfig(rounds=5), FedConfig(rounds=5, workers=4)
    a, _ = run_rounds(make_nodes(nodes, serial), test, serial)
    b, _ = run_rounds(make_nodes(nodes, parallel), test, parallel)
    assert telemetry_csv(a) == telemetry_csv(b)
    assert all(x.model == y.model for x, y in zip(a, b))


def test_empty_group_carries_model_over(federation):
    nodes, test = federation
    # contributions stay far below e_min=1, so nothing qualifies and reputations decay
    cfg = FedConfig(rounds=3, e_min=1.0, r_min=0.0)
    history, model = run_rounds(make_nodes(nodes, cfg), test, cfg)
    assert all(rec.empty_group and rec.group == [] for rec in history)
    assert model == initial_model(4, 6, cfg)


def test_eviction_is_permanent(federation):
    nodes, test = federation
    noise = np.random.default_rng(0)
    garbage = Dataset(noise.standard_normal((40, 6)) * 50, noise.integers(1, 5, 40), 4)
    cfg = FedConfig(rounds=10, e_min=0.05)
    history, _ = run_rounds(make_nodes(nodes[:3] + [garbage], cfg), test, cfg)
    evicted_at = fedrep.eviction_rounds(history)
    assert 3 in evicted_at
    for rec in history:
        if rec.round > evicted_at[3]:
            assert 3 not in rec.nodes and 3 not in rec.weights


def test_corrected_reputation_never_rises(federation):
    nodes, test = federation
    noise = np.random.default_rng(1)
    garbage = Dataset(noise.standard_normal((40, 6)) * 50, noise.integers(1, 5, 40), 4)
    cfg = FedConfig(rounds=10, e_min=0.05, r_min=0.0)
    history, _ = run_rounds(make_nodes(nodes + [garbage], cfg), test, cfg)
    for k in range(5):
        trace = [rec.nodes[k].reputation for rec in history if k in rec.nodes]
        assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_audit_log_lines(blobs):
    sink = io.StringIO()
    audit = ReputationAudit(sink)
    node = NodeState(0, blobs, reputation=0.5)
    select_group([node], {0: -0.1}, FedConfig(e_min=0.1, r_min=0.0, reputation_rule="literal"), 4, audit)
    assert sink.getvalue() == "t=4 node=0 e=-0.1 r_old=0.5 r_new=1.0 rule=literal r_raw=1.0\n"


def test_config_validation():
    with pytest.raises(ValueError, match="e_min"):
        FedConfig(e_min=-0.1)
    with pytest.raises(ValueError, match="r_min"):
        FedConfig(r_min=1.0, r_init=1.0)
    with pytest.raises(ValueError):
        FedConfig(reputation_rule="bogus")


def test_defense_never_reads_malicious_flag():
    tree = ast.parse(inspect.getsource(fedrep))
    readers = []
    for fn in ast.walk(tree):
        if isinstance(fn, ast.FunctionDef):
            for node in ast.walk(fn):
                if isinstance(node, ast.Attribute) and node.attr == "malicious":
                    readers.append(fn.name)
    assert readers == []


def test_telemetry_csv_shape(federation):
    nodes, test = federation
    cfg = FedConfig(rounds=2)
    history, _ = run_rounds(make_nodes(nodes, cfg), test, cfg)
    lines = telemetry_csv(history).splitlines()
    assert lines[0] == "round,node,contribution,reputation,in_group,evicted,global_accuracy,global_loss"
    assert len(lines) == 1 + 2 * len(nodes)
    assert math.isfinite(float(lines[1].split(",")[-1]))
