"""Paired attack/defense experiment over the four arms.

All arms derive data, partition, malicious node choice and poison from the
same master seed, so ``poisoned-fedavg`` and ``poisoned-defense`` train on
identical poisoned node datasets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from repfl.attack import AttackPlan, ManifestEntry, manifest_csv, poison_federation
from repfl.config import ExperimentConfig, dump_config
from repfl.dataset import Dataset, SyntheticSpec, generate_synthetic, load_csv, partition, train_test_split
from repfl.fedrep import ReputationAudit, RoundRecord, eviction_rounds, make_nodes, run_rounds, telemetry_csv
from repfl.model import LinearModel, TrainConfig, train_softmax
from repfl.plot import emit_plot
from repfl.risk import RiskAnnotatedDataset, assess_risk
from repfl.xai import ImportanceReport, permutation_importance

log = logging.getLogger(__name__)

# stream tags for seeds derived from the master seed
DATA, SPLIT, PARTITION, FLAGS, EXPLAIN = range(1, 6)


def derive_seed(master: int, tag: int) -> int:
    return int(np.random.SeedSequence([master, tag]).generate_state(1, np.uint64)[0])


class ArmError(RuntimeError):
    pass


@dataclass
class Federation:
    train: Dataset
    test: Dataset
    nodes: List[Dataset]
    flags: List[bool]
    annotated: List[RiskAnnotatedDataset] = field(default_factory=list)
    reports: List[Optional[ImportanceReport]] = field(default_factory=list)
    poisoned: List[Dataset] = field(default_factory=list)
    manifest: List[ManifestEntry] = field(default_factory=list)


@dataclass
class ArmResult:
    arm: str
    history: List[RoundRecord]
    model: LinearModel
    final_accuracy: float
    evictions: Dict[int, int]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    federation: Federation
    arms: Dict[str, ArmResult]
    summary: str


def load_data(cfg: ExperimentConfig) -> Dataset:
    if cfg.data.source == "synthetic":
        spec = SyntheticSpec(cfg.data.n_per_class, cfg.data.d, cfg.data.classes, cfg.data.separation,
                             cfg.data.noise_sigma, derive_seed(cfg.seed, DATA))
        return generate_synthetic(spec)
    return load_csv(cfg.data.source)


def attack_plan(cfg: ExperimentConfig, flags: Sequence[bool]) -> AttackPlan:
    return AttackPlan(tuple(flags), cfg.attack.budget, cfg.attack.budget_fraction)


def reference_model(data: Dataset, train: TrainConfig, steps: int) -> LinearModel:
    """The attacker's view: a softmax model fit to the compromised node's clean data."""
    return train_softmax(LinearModel.zeros(data.C, data.d), data, train, steps)


def build_federation(cfg: ExperimentConfig, poison: bool = True) -> Federation:
    data = load_data(cfg)
    train, test = train_test_split(data, cfg.data.test_fraction, derive_seed(cfg.seed, SPLIT))
    nodes = partition(train, cfg.partition.nodes, cfg.partition.scheme, cfg.partition.beta,
                      derive_seed(cfg.seed, PARTITION))
    rng = np.random.default_rng(derive_seed(cfg.seed, FLAGS))
    chosen = set(rng.choice(len(nodes), cfg.attack.malicious, replace=False).tolist())
    flags = [k in chosen for k in range(len(nodes))]
    fed = Federation(train, test, nodes, flags)
    if poison:
        fed.annotated = [assess_risk(node, cfg.svm, cfg.attack.max_levels) for node in nodes]
        explain_seed = derive_seed(cfg.seed, EXPLAIN)
        fed.reports = [
            permutation_importance(reference_model(node, cfg.train, cfg.attack.reference_steps), node,
                                   cfg.attack.importance_repeats, explain_seed) if flag else None
            for node, flag in zip(nodes, flags)
        ]
        fed.poisoned, fed.manifest = poison_federation(fed.annotated, attack_plan(cfg, flags), fed.reports)
    return fed


def run_arm(arm: str, fed: Federation, cfg: ExperimentConfig, audit: Optional[ReputationAudit] = None) -> ArmResult:
    datasets = fed.poisoned if arm.startswith("poisoned") else fed.nodes
    fcfg = cfg.fed_config(defense=arm.endswith("defense"))
    nodes = make_nodes(datasets, fcfg, fed.flags)
    history, model = run_rounds(nodes, fed.test, fcfg, audit=audit)
    return ArmResult(arm, history, model, history[-1].accuracy, eviction_rounds(history))


def summary_csv(cfg: ExperimentConfig, fed: Federation, arms: Dict[str, ArmResult]) -> str:
    malicious = [k for k, f in enumerate(fed.flags) if f]
    lines = ["arm,final_accuracy,final_loss,malicious_evicted,eviction_rounds"]
    for name in cfg.arms:
        res = arms[name]
        loss = res.history[-1].loss
        rounds = " ".join(f"{k}:{res.evictions.get(k, 'never')}" for k in malicious) or "none"
        evicted = sum(k in res.evictions for k in malicious)
        lines.append(f"{name},{res.final_accuracy!r},{loss!r},{evicted},{rounds}")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: Union[str, Path, None] = None) -> ExperimentResult:
    """Run every configured arm; with ``out_dir`` also write telemetry, summary, manifest, plot and config."""
    needs_poison = any(a.startswith("poisoned") for a in cfg.arms)
    fed = build_federation(cfg, poison=needs_poison)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    results: Dict[str, ArmResult] = {}
    for arm in cfg.arms:
        audit = None
        if cfg.audit_log and arm.endswith("defense"):
            audit = ReputationAudit(out / f"reputation_{arm}.log" if out is not None else None)
        try:
            results[arm] = run_arm(arm, fed, cfg, audit)
        except Exception as exc:
            raise ArmError(f"arm {arm}: {exc}") from exc
        log.info("arm %s: final accuracy %.4f", arm, results[arm].final_accuracy)
    summary = summary_csv(cfg, fed, results)
    if out is not None:
        telemetry = []
        for arm in cfg.arms:
            path = out / f"telemetry_{arm}.csv"
            telemetry_csv(results[arm].history, path)
            telemetry.append(path)
        (out / "summary.csv").write_text(summary, encoding="utf-8")
        if needs_poison:
            manifest_csv(fed.manifest, out / "poison_manifest.csv")
        emit_plot(telemetry, out / "accuracy.svg")
        (out / "config.txt").write_text(dump_config(cfg), encoding="utf-8")
    return ExperimentResult(cfg, fed, results, summary)
