"""Run the four-arm experiment over several seeds and print mean final accuracies.

    python3 scripts/defense_experiment.py --config configs/default.txt --seeds 0 1 2 3 4
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from repfl.config import ExperimentConfig, parse_config
from repfl.experiment import run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--out", help="write each seed's outputs under this directory")
    args = parser.parse_args()
    base = parse_config(args.config) if args.config else ExperimentConfig()

    finals = {arm: [] for arm in base.arms}
    for seed in args.seeds:
        cfg = dataclasses.replace(base, seed=seed)
        out = Path(args.out) / f"seed{seed}" if args.out else None
        result = run_experiment(cfg, out)
        flags = result.federation.flags
        for arm, res in result.arms.items():
            finals[arm].append(res.final_accuracy)
            bad = sum(1 for k, f in enumerate(flags) if f and k in res.evictions)
            good = sum(1 for k, f in enumerate(flags) if not f and k in res.evictions)
            print(f"seed {seed} {arm:17s} acc={res.final_accuracy:.4f} evicted malicious={bad} honest={good}")
    print()
    for arm, values in finals.items():
        print(f"mean {arm:17s} {np.mean(values):.4f} (sd {np.std(values):.4f})")


if __name__ == "__main__":
    main()
