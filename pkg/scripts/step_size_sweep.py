"""Sweep the local learning rate and show how the defense trades off detection against honest evictions.

At stable step sizes every node, poisoned or not, improves its own loss by
well over e_min each round, so no node is ever excluded. Only in the
overshoot regime do poisoned nodes report negative contributions, and honest
nodes start to follow.

    python3 scripts/step_size_sweep.py --rates 0.5 2 5 10 --seeds 0 1 2
"""

import argparse

import numpy as np

from repfl.config import build_config
from repfl.experiment import ArmError, run_experiment

ARMS = ("clean-fedavg", "poisoned-fedavg", "poisoned-defense")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rates", type=float, nargs="+", default=[0.5, 2.0, 5.0, 10.0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--e-min", type=float, default=0.01)
    parser.add_argument("--r-min", type=float, default=0.2)
    args = parser.parse_args()

    print("rate   " + "  ".join(f"{a:>16s}" for a in ARMS) + "  mal_evicted  honest_evicted")
    for rate in args.rates:
        acc = {a: [] for a in ARMS}
        mal, honest = [], []
        try:
            for seed in args.seeds:
                cfg = build_config({"seed": str(seed), "train.learning_rate": repr(rate), "arms": ", ".join(ARMS),
                                    "fed.e_min": repr(args.e_min), "fed.r_min": repr(args.r_min)})
                result = run_experiment(cfg)
                flags = result.federation.flags
                for a in ARMS:
                    acc[a].append(result.arms[a].final_accuracy)
                ev = result.arms["poisoned-defense"].evictions
                mal.append(sum(1 for k, f in enumerate(flags) if f and k in ev))
                honest.append(sum(1 for k, f in enumerate(flags) if not f and k in ev))
        except ArmError as exc:
            print(f"{rate:<6g} failed: {exc}")
            continue
        cells = "  ".join(f"{np.mean(acc[a]):16.4f}" for a in ARMS)
        print(f"{rate:<6g} {cells}  {np.mean(mal):11.2f}  {np.mean(honest):14.2f}")


if __name__ == "__main__":
    main()
