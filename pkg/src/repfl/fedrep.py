"""Federated training loop: size-weighted FedAvg or reputation-weighted aggregation.

Every round each alive node takes ``local_steps`` full-batch steps from the
broadcast model and reports its relative loss improvement on its own data
(the contribution). With the defense enabled, nodes above ``e_min`` form the
aggregation group and are averaged with weights proportional to reputation;
the rest lose reputation and are evicted for good once it drops below
``r_min``. Without the defense all alive nodes are averaged by data size.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, TextIO, Tuple, Union

import numpy as np

from repfl.dataset import Dataset
from repfl.model import LinearModel, TrainConfig, accuracy, mean_loss, sgd_step

RULES = ("corrected", "literal")


class DegenerateLossError(ValueError):
    """Contribution is undefined because the loss before the update is exactly zero."""


@dataclass
class NodeState:
    node_id: int
    data: Dataset
    reputation: float = 1.0
    malicious: bool = False  # ground truth for reporting only
    alive: bool = True
    local_model: Optional[LinearModel] = None


@dataclass(frozen=True)
class FedConfig:
    rounds: int = 30
    train: TrainConfig = TrainConfig()
    e_min: float = 0.01
    r_min: float = 0.2
    r_init: float = 1.0
    reputation_rule: str = "corrected"
    defense_enabled: bool = True
    master_seed: int = 0
    init_scale: float = 0.01
    workers: int = 1

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if not 0 < self.e_min <= 1:
            raise ValueError(f"e_min must lie in (0, 1], got {self.e_min}")
        if not self.r_init > 0:
            raise ValueError(f"r_init must be > 0, got {self.r_init}")
        if not 0 <= self.r_min < self.r_init:
            raise ValueError(f"r_min must satisfy 0 <= r_min < r_init, got r_min={self.r_min}, r_init={self.r_init}")
        if self.reputation_rule not in RULES:
            raise ValueError(f"reputation_rule must be one of {RULES}, got {self.reputation_rule!r}")
        if self.init_scale < 0:
            raise ValueError(f"init_scale must be >= 0, got {self.init_scale}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class NodeRound:
    contribution: float
    reputation: float
    in_group: bool
    evicted: bool


@dataclass
class RoundRecord:
    """Telemetry for one round. ``nodes`` lists only the nodes alive when the round started."""

    round: int
    nodes: Dict[int, NodeRound]
    weights: Dict[int, float]
    accuracy: float
    loss: float
    model: LinearModel
    empty_group: bool = False

    @property
    def group(self) -> List[int]:
        return [k for k, nr in self.nodes.items() if nr.in_group]


class ReputationAudit:
    """Append-only log with one line per reputation update."""

    def __init__(self, sink: Union[str, Path, TextIO, None] = None):
        self.lines: List[str] = []
        self._path = Path(sink) if isinstance(sink, (str, Path)) else None
        self._stream = None if isinstance(sink, (str, Path)) else sink

    def record(self, t: int, node: int, e: float, r_old: float, r_new: float, r_raw: float, rule: str) -> None:
        line = f"t={t} node={node} e={e!r} r_old={r_old!r} r_new={r_new!r} rule={rule} r_raw={r_raw!r}"
        self.lines.append(line)
        if self._path is not None:
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        elif self._stream is not None:
            self._stream.write(line + "\n")


def local_update(global_model: LinearModel, node: NodeState, cfg: TrainConfig) -> LinearModel:
    if not node.alive:
        raise ValueError(f"node {node.node_id} has been evicted")
    if node.data.n == 0:
        raise ValueError(f"node {node.node_id} holds no data")
    model = global_model
    for _ in range(cfg.local_steps):
        model = sgd_step(model, node.data, cfg)
    return model


def relative_improvement(before: float, after: float) -> float:
    if before == 0.0:
        raise DegenerateLossError("loss before the update is exactly zero")
    return (before - after) / before


def contribution(node: NodeState, w_before: LinearModel, w_after: LinearModel) -> float:
    """Relative drop of the node's own mean loss, ``(L_before - L_after) / L_before``."""
    try:
        return relative_improvement(mean_loss(w_before, node.data), mean_loss(w_after, node.data))
    except DegenerateLossError as exc:
        raise DegenerateLossError(f"node {node.node_id}: {exc}") from None


def reputation_rule(r: float, e: float, e_min: float, rule: str = "corrected") -> float:
    """Unclamped reputation after a round with contribution ``e``.

    Above ``e_min`` the reputation is untouched. In ``(0, e_min]`` it is scaled
    by ``(e_min - e) / e_min``. At ``e <= 0`` the ``literal`` rule computes
    ``r - r * e / e_min``, which grows for negative ``e``; the ``corrected``
    rule scales by ``max(0, 1 + e / e_min)`` instead.
    """
    if r < 0:
        raise ValueError(f"reputation must be >= 0, got {r}")
    if not e_min > 0:
        raise ValueError(f"e_min must be > 0, got {e_min}")
    if rule not in RULES:
        raise ValueError(f"unknown reputation rule {rule!r}")
    if e > e_min:
        return r
    if e > 0:
        # factor first: it is <= 1 in floating point, so r can never creep upward
        return r * ((e_min - e) / e_min)
    if rule == "literal":
        return r - r * e / e_min
    return r * max(0.0, 1.0 + e / e_min)


def update_reputation(r: float, e: float, e_min: float, rule: str = "corrected", r_init: float = 1.0) -> float:
    return min(max(reputation_rule(r, e, e_min, rule), 0.0), r_init)


def select_group(nodes: Sequence[NodeState], contributions: Dict[int, float], cfg: FedConfig, t: int = 0,
                 audit: Optional[ReputationAudit] = None) -> Tuple[List[int], List[int]]:
    """Split alive nodes into this round's aggregation group and the newly evicted.

    Reputations and ``alive`` flags are updated in place.
    """
    group, evicted = [], []
    for node in nodes:
        if not node.alive:
            continue
        e = contributions[node.node_id]
        if e > cfg.e_min:
            group.append(node.node_id)
        else:
            raw = reputation_rule(node.reputation, e, cfg.e_min, cfg.reputation_rule)
            new = min(max(raw, 0.0), cfg.r_init)
            if audit is not None:
                audit.record(t, node.node_id, e, node.reputation, new, raw, cfg.reputation_rule)
            node.reputation = new
        if node.reputation < cfg.r_min:
            node.alive = False
            evicted.append(node.node_id)
    return group, evicted


def _weighted_sum(models: Sequence[LinearModel], weights: np.ndarray) -> LinearModel:
    W = np.zeros_like(models[0].W)
    b = np.zeros_like(models[0].b)
    for mu, m in zip(weights, models):
        W += mu * m.W
        b += mu * m.b
    return LinearModel(W, b)


def reputation_weights(reputations: Sequence[float]) -> np.ndarray:
    r = np.asarray(reputations, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty aggregation group")
    total = r.sum()
    if not total > 0:
        raise ValueError("aggregation group has zero total reputation")
    return r / total


def fedavg_weights(sizes: Sequence[int]) -> np.ndarray:
    s = np.asarray(sizes, dtype=np.float64)
    if s.size == 0:
        raise ValueError("no models to aggregate")
    return s / s.sum()


def aggregate_reputation(models: Sequence[LinearModel], reputations: Sequence[float]) -> LinearModel:
    """``sum_k r_k / sum_i r_i * w_k`` over the group."""
    if len(models) != len(reputations):
        raise ValueError("one reputation per model required")
    if len(models) == 1:
        return models[0]
    return _weighted_sum(models, reputation_weights(reputations))


def aggregate_fedavg(models: Sequence[LinearModel], sizes: Sequence[int]) -> LinearModel:
    """Data-size weighted average ``sum_k S_k / S * w_k``."""
    if len(models) != len(sizes):
        raise ValueError("one size per model required")
    if all(m == models[0] for m in models):
        return models[0]
    return _weighted_sum(models, fedavg_weights(sizes))


def global_loss(model: LinearModel, datasets: Sequence[Dataset]) -> float:
    """Size-weighted mean of per-node mean losses (equals the pooled mean loss)."""
    parts = [d for d in datasets if d.n > 0]
    if not parts:
        raise ValueError("all node datasets are empty")
    total = sum(d.n for d in parts)
    return float(sum(d.n / total * mean_loss(model, d) for d in parts))


def initial_model(C: int, d: int, cfg: FedConfig) -> LinearModel:
    """Uniform draw from ``[-init_scale, init_scale]`` seeded by ``master_seed``."""
    if cfg.init_scale == 0:
        return LinearModel.zeros(C, d)
    rng = np.random.default_rng([cfg.master_seed, 0xF00D])
    return LinearModel(rng.uniform(-cfg.init_scale, cfg.init_scale, (C, d)), np.zeros(C))


def make_nodes(datasets: Sequence[Dataset], cfg: FedConfig, malicious: Sequence[bool] = ()) -> List[NodeState]:
    flags = list(malicious) or [False] * len(datasets)
    return [NodeState(k, data, cfg.r_init, bool(flag)) for k, (data, flag) in enumerate(zip(datasets, flags))]


def _local_round(global_model: LinearModel, node: NodeState, cfg: TrainConfig) -> Tuple[LinearModel, float]:
    w = local_update(global_model, node, cfg)
    return w, contribution(node, global_model, w)


def run_rounds(nodes: Sequence[NodeState], test: Dataset, cfg: FedConfig, init: Optional[LinearModel] = None,
               audit: Optional[ReputationAudit] = None) -> Tuple[List[RoundRecord], LinearModel]:
    """Run ``cfg.rounds`` aggregation rounds, mutating node reputations and ``alive`` flags.

    Local updates may run on ``cfg.workers`` threads; everything after the
    per-node work happens in node order, so results do not depend on it.
    """
    if not nodes:
        raise ValueError("no nodes")
    C, d = test.C, test.d
    for node in nodes:
        C = max(C, node.data.C)
    model = init if init is not None else initial_model(C, d, cfg)
    history: List[RoundRecord] = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for t in range(1, cfg.rounds + 1):
            alive = [n for n in nodes if n.alive]
            if not alive:
                raise RuntimeError(f"round {t}: no alive nodes left")
            if pool is None:
                results = [_local_round(model, n, cfg.train) for n in alive]
            else:
                results = list(pool.map(lambda n: _local_round(model, n, cfg.train), alive))
            contributions = {}
            for node, (w, e) in zip(alive, results):
                node.local_model = w
                contributions[node.node_id] = e

            evicted: List[int] = []
            empty = False
            if cfg.defense_enabled:
                group, evicted = select_group(alive, contributions, cfg, t, audit)
                members = [n for n in alive if n.node_id in group]
                total = sum(n.reputation for n in members)
                if members and total > 0:
                    mu = reputation_weights([n.reputation for n in members])
                    model = aggregate_reputation([n.local_model for n in members], [n.reputation for n in members])
                    weights = {n.node_id: float(m) for n, m in zip(members, mu)}
                else:
                    empty = True
                    group, weights = [], {}
            else:
                group = [n.node_id for n in alive]
                mu = fedavg_weights([n.data.n for n in alive])
                model = aggregate_fedavg([n.local_model for n in alive], [n.data.n for n in alive])
                weights = {n.node_id: float(m) for n, m in zip(alive, mu)}

            in_group: Set[int] = set(group)
            still_alive = [n.data for n in nodes if n.alive]
            history.append(RoundRecord(
                round=t,
                nodes={
                    n.node_id: NodeRound(contributions[n.node_id], n.reputation, n.node_id in in_group,
                                         n.node_id in evicted)
                    for n in alive
                },
                weights=weights,
                accuracy=accuracy(model, test),
                loss=global_loss(model, still_alive) if still_alive else float("nan"),
                model=model,
                empty_group=empty,
            ))
    finally:
        if pool is not None:
            pool.shutdown()
    return history, model


TELEMETRY_HEADER = ("round", "node", "contribution", "reputation", "in_group", "evicted", "global_accuracy",
                    "global_loss")


def telemetry_csv(history: Sequence[RoundRecord], path: Union[str, Path, None] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TELEMETRY_HEADER)
    for rec in history:
        for k, nr in rec.nodes.items():
            writer.writerow([rec.round, k, repr(nr.contribution), repr(nr.reputation), int(nr.in_group),
                             int(nr.evicted), repr(rec.accuracy), repr(rec.loss)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def eviction_rounds(history: Sequence[RoundRecord]) -> Dict[int, int]:
    out = {}
    for rec in history:
        for k, nr in rec.nodes.items():
            if nr.evicted:
                out[k] = rec.round
    return out
