"""``twoweight`` command line.

Exit codes: 0 success, 2 input error, 3 theorem violation, 4 size guard.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .experiments import COMMANDS, row_dict
from .operators import SizeGuardError
from .proof import TheoremViolation

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_SIZE = 0, 2, 3, 4


def _clean(x):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


def dumps(doc: dict) -> str:
    return json.dumps(_clean(doc), indent=2, ensure_ascii=False) + "\n"


def to_csv(rows) -> str:
    rows = [_clean(row_dict(r)) for r in rows]
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\r\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twoweight", description="Two-weight maximal function lab")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output path (JSON report or CSV sweep); stdout when omitted")
    ap.add_argument("--exact", action="store_true", help="rational arithmetic where supported")
    return ap


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg.experiment = args.experiment
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.exact:
        cfg.exact = True
    return cfg.validate()


def run(cfg: ExperimentConfig) -> None:
    result = COMMANDS[cfg.experiment](cfg)
    if isinstance(result, tuple):
        rows, summary = result
        _emit(to_csv(rows), cfg.out)
        if cfg.out:
            sys.stdout.write(dumps(summary))
        else:
            sys.stderr.write(dumps(summary))
    else:
        _emit(dumps(result), cfg.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(load_config(args))
    except TheoremViolation as exc:
        sys.stderr.write(f"theorem violation: {exc}\n")
        sys.stderr.write(dumps({"certificate": exc.certificate}))
        return EXIT_VIOLATION
    except SizeGuardError as exc:
        sys.stderr.write(f"size guard: {exc}\n")
        return EXIT_SIZE
    except (ConfigError, ValueError, OSError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
