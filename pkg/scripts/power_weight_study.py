"""Print the power-weight table: A_2 characteristic, mass exponent and doubling ratio against eps."""
from __future__ import annotations

import argparse

from twoweight.config import ExperimentConfig
from twoweight.experiments import cmd_power_weight


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--level", type=int, default=14)
    ap.add_argument("--norm-level", type=int, default=8)
    ap.add_argument("--budget", type=int, default=2)
    args = ap.parse_args()
    cfg = ExperimentConfig(experiment="power-weight", level=args.level, norm_level=args.norm_level,
                           budget=args.budget).validate()
    rows, summary = cmd_power_weight(cfg)
    print(f"{'eps':>10} {'A2':>10} {'eps*A2':>8} {'exponent':>9} {'doubling':>9} {'target':>9} {'norm':>8}")
    for r in rows:
        print(f"{r['epsilon']:>10.6f} {r['a2']:>10.4f} {r['epsilon'] * r['a2']:>8.4f} {r['mass_exponent']:>9.5f} "
              f"{r['doubling_ratio']:>9.5f} {r['doubling_target']:>9.5f} {r['norm_lower_bound']:>8.4f}")
    print(f"log-log slope of A2 vs eps: {summary['a2_slope']:.4f}; of norm bound: {summary['norm_slope']:.4f}")


if __name__ == "__main__":
    main()
