"""Command-line front end for training runs and parameter sweeps."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .clustering import dump_assignments
from .config import SCHEMES, load_config_file, make_config
from .harness import (run_experiment, run_sweep, write_metrics_csv,
                      write_summary_json, write_sweep_csv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airfed",
        description="Two-tier over-the-air federated learning simulator")
    parser.add_argument("--config", help="key=value config file (flags override)")
    parser.add_argument("--devices", type=int)
    parser.add_argument("--clusters", type=int)
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--lipschitz", type=float)
    parser.add_argument("--power-w", type=float, dest="power_w")
    parser.add_argument("--noise-dbm", type=float, dest="noise_dbm")
    parser.add_argument("--data", choices=["iid", "noniid", "synthetic"])
    parser.add_argument("--scheme", choices=list(SCHEMES))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--model", choices=["softmax", "mlp", "quadratic"])
    parser.add_argument("--idx-dir", dest="idx_dir",
                        help="directory with IDX train/t10k image+label files")
    parser.add_argument("--sweep", choices=["clusters", "power"])
    parser.add_argument("--out", default="metrics.csv", help="output CSV path")
    parser.add_argument("--summary-json", dest="summary_json",
                        help="also write a JSON run summary here")
    parser.add_argument("--dump-assignments", action="store_true",
                        help="write <out stem>_assignments.csv")
    parser.add_argument("--dump-trace", action="store_true",
                        help="write <out stem>_trace.csv for the last round")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    file_values = load_config_file(args.config) if args.config else None
    overrides = {k: getattr(args, k) for k in
                 ("devices", "clusters", "rounds", "batch", "lr", "lipschitz",
                  "power_w", "noise_dbm", "data", "scheme", "seed", "model",
                  "idx_dir")}
    cfg = make_config(file_values, **overrides)

    out = Path(args.out)
    if args.sweep:
        rows = run_sweep(cfg, args.sweep)
        label = "clusters" if args.sweep == "clusters" else "power_w"
        write_sweep_csv(out, rows, label)
        print(f"wrote {out} ({len(rows)} {args.sweep} values)")
        return 0

    result = run_experiment(cfg)
    write_metrics_csv(out, result)
    print(f"wrote {out} ({len(result.metrics)} rounds, "
          f"final accuracy {result.final_accuracy:.4f})")
    if args.summary_json:
        write_summary_json(args.summary_json, result)
    if args.dump_assignments:
        dump_assignments(out.with_name(out.stem + "_assignments.csv"),
                         result.assignments)
    if args.dump_trace and result.traces:
        result.traces[-1][1].dump_csv(out.with_name(out.stem + "_trace.csv"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
