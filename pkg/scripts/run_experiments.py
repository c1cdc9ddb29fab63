"""Run every bundled experiment config and write outputs under ``results/``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from twoweight.cli import main as cli_main

HERE = Path(__file__).parent
RUNS = [
    ("equivalence", "equivalence.json", "equivalence.csv"),
    ("power-weight", "power_weight.json", "power_weight.csv"),
    ("dthreshold", "dthreshold.json", "dthreshold.csv"),
    ("decompose", "decompose_atoms.json", "decompose_atoms.json"),
    ("poisson", "poisson.json", "poisson.json"),
    ("fractional", "fractional.json", "fractional.json"),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--only", choices=[r[0] for r in RUNS])
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for name, cfg, target in RUNS:
        if args.only and name != args.only:
            continue
        code = cli_main([name, "--config", str(HERE / "configs" / cfg), "--out", str(out / target)])
        print(f"{name}: exit {code} -> {out / target}", file=sys.stderr)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
