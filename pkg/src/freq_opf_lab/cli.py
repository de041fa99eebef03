"""Command line entry point: ``freq-opf-lab gen-dataset|train|run-day|report``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (RESULTS_FILE, ConfigError, StudyConfig, cmd_gen_dataset, cmd_report,
                      cmd_run_day, cmd_train)

log = logging.getLogger("freq_opf_lab")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freq-opf-lab", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", help="case file path or bundled case name (ieee9, ieee39)")
    common.add_argument("--config", help="study config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen-dataset", parents=[common], help="simulate labelled scenarios")
    g.add_argument("--samples", type=int)
    t = sub.add_parser("train", parents=[common], help="train the frequency predictor")
    t.add_argument("--dataset", help="dataset CSV (default: OUT_DIR/dataset.csv)")
    d = sub.add_parser("run-day", parents=[common], help="24-hour three-variant benchmark")
    d.add_argument("--model", help="model JSON (default: OUT_DIR/model.json)")
    d.add_argument("--timing", action="store_true", help="record wall-clock solve_ms")
    r = sub.add_parser("report", parents=[common], help="summarise day results")
    r.add_argument("results", nargs="*", help=f"results CSVs (default: OUT_DIR/{RESULTS_FILE})")
    r.add_argument("--hours", type=int, nargs="+", default=[1, 8])
    return p


def _config(args) -> StudyConfig:
    cfg = StudyConfig.load(args.config) if args.config else StudyConfig()
    if args.case:
        cfg = replace(cfg, case=args.case)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "samples", None):
        cfg = replace(cfg, samples=args.samples)
    if getattr(args, "timing", False):
        cfg = replace(cfg, timing=True)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out_dir)
    try:
        cfg = _config(args)
        if args.command == "gen-dataset":
            path = cmd_gen_dataset(cfg, out, jobs=args.jobs)
            print(f"wrote {path}")
        elif args.command == "train":
            rep = cmd_train(cfg, out, args.dataset)
            print(f"wrote {rep.model_path} (test MAE rocof {rep.test_mae[0]:.4g} Hz/s, "
                  f"fn {rep.test_mae[1]:.4g} Hz; R2 {rep.test_r2[0]:.4f}/{rep.test_r2[1]:.4f})")
        elif args.command == "run-day":
            results = cmd_run_day(cfg, out, args.model, jobs=args.jobs)
            failed = sum(len(r.errors) for r in results)
            print(f"wrote {out / RESULTS_FILE} ({failed} failed variant-hours)")
        elif args.command == "report":
            paths = args.results or [out / RESULTS_FILE]
            print(cmd_report(paths, args.hours, out), end="")
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
