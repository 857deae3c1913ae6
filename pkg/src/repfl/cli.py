"""Command line entry point: ``repfl {generate,assess-risk,attack,run,plot}``.

Every subcommand accepts ``--config``, ``--seed`` and ``--out``. Errors exit
nonzero (1, or 2 for usage errors) with a single ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from repfl.attack import AttackPlan, manifest_csv, poison_node
from repfl.config import ExperimentConfig, build_config, parse_config
from repfl.dataset import SyntheticSpec, generate_synthetic, load_csv
from repfl.experiment import EXPLAIN, derive_seed, reference_model, run_experiment
from repfl.plot import emit_plot
from repfl.risk import assess_risk, load_annotated_csv
from repfl.xai import permutation_importance

log = logging.getLogger("repfl")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    return build_config(overrides, cfg) if overrides else cfg


def out_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_generate(args, cfg: ExperimentConfig) -> Path:
    d = cfg.data
    spec = SyntheticSpec(d.n_per_class, d.d, d.classes, d.separation, d.noise_sigma, cfg.seed)
    path = out_dir(cfg) / "dataset.csv"
    generate_synthetic(spec).to_csv(path)
    return path


def cmd_assess_risk(args, cfg: ExperimentConfig) -> Path:
    annotated = assess_risk(load_csv(args.input), cfg.svm, cfg.attack.max_levels)
    path = out_dir(cfg) / (Path(args.input).stem + "_risk.csv")
    annotated.to_csv(path)
    log.info("%d samples over %d risk levels", annotated.data.n, annotated.levels)
    return path


def cmd_attack(args, cfg: ExperimentConfig) -> Path:
    annotated = load_annotated_csv(args.input)
    data = annotated.strip()
    plan = AttackPlan((True,), cfg.attack.budget, cfg.attack.budget_fraction)
    model = reference_model(data, cfg.train, cfg.attack.reference_steps)
    report = permutation_importance(model, data, cfg.attack.importance_repeats, derive_seed(cfg.seed, EXPLAIN))
    poisoned, manifest = poison_node(annotated, report, True, plan.alpha(data.n))
    out = out_dir(cfg)
    path = out / (Path(args.input).stem + "_poisoned.csv")
    poisoned.to_csv(path)
    manifest_csv(manifest, out / "poison_manifest.csv")
    report.to_csv(out / "importance.csv")
    return path


def cmd_run(args, cfg: ExperimentConfig) -> Path:
    path = out_dir(cfg)
    result = run_experiment(cfg, path)
    sys.stdout.write(result.summary)
    return path / "summary.csv"


def cmd_plot(args, cfg: ExperimentConfig) -> Path:
    path = out_dir(cfg) / "accuracy.svg"
    emit_plot(args.telemetry, path)
    return path


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = Parser(prog="repfl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset CSV")
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("assess-risk", parents=[common], help="annotate a dataset CSV with risk ranks")
    p.add_argument("input")
    p.set_defaults(func=cmd_assess_risk)
    p = sub.add_parser("attack", parents=[common], help="poison a risk-annotated CSV as one compromised node")
    p.add_argument("input")
    p.set_defaults(func=cmd_attack)
    p = sub.add_parser("run", parents=[common], help="run the configured experiment arms")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("plot", parents=[common], help="chart accuracy from telemetry CSVs")
    p.add_argument("telemetry", nargs="+")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        path = args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one diagnostic line
        message = " ".join(str(exc).split()) or type(exc).__name__
        sys.stderr.write(f"error: {message}\n")
        return 1
    log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
