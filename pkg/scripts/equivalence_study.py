"""Equivalence sweep summary: quantiles of norm / (A_p + restricted testing) for several p."""
from __future__ import annotations

import argparse

from twoweight.config import ExperimentConfig
from twoweight.experiments import cmd_equivalence


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--level", type=int, default=8)
    ap.add_argument("--dimension", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for p in (1.5, 2.0, 3.0):
        cfg = ExperimentConfig(experiment="equivalence", dimension=args.dimension, level=args.level, p=p,
                               instances=args.instances, seed=args.seed, budget=1,
                               sigma={"kind": "lognormal", "s": 2.0}, w={"kind": "lognormal", "s": 2.0})
        rows, summary = cmd_equivalence(cfg.validate())
        q = summary["ratio_quantiles"]
        print(f"p={p}: median {q['median']:.4f}  q95 {q['q95']:.4f}  max {q['max']:.4f}  "
              f"(norm >= P on all rows: {all(r.norm_lower_bound >= r.restricted_testing for r in rows)})")


if __name__ == "__main__":
    main()
