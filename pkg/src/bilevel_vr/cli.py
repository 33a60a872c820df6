"""Command line entry point: ``bilevel-vr {run,compare,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness.config import ConfigError, load_config
from .harness.runner import compare_runs, format_table, run_experiment, write_table

log = logging.getLogger("bilevel_vr")


def _figure_path(csv_path):
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem.replace("_seed", "_s") + ".png")


def cmd_run(args):
    cfg = load_config(args.config)
    results = run_experiment(cfg)
    for res in results:
        last = res.rows[-1] if res.rows else None
        status = "ok" if res.ok else res.error
        print(f"seed {res.seed}: {len(res.rows)} rows -> {res.csv_path} "
              f"(final phi {last.phi:.6g}) [{status}]" if last else f"seed {res.seed}: no rows [{status}]")
    if args.figures:
        from .harness.plotting import plot_results

        fig = plot_results(results, Path(cfg.output_path()).with_suffix(".png"), title=cfg.label)
        print(f"figure -> {fig}")
    return 0 if all(r.ok for r in results) else 3


def cmd_compare(args):
    cfg_a = load_config(args.config_a)
    cfg_b = load_config(args.config_b)
    if cfg_a.label == cfg_b.label:
        cfg_a = cfg_a.replace(name=f"{cfg_a.label} (a)")
        cfg_b = cfg_b.replace(name=f"{cfg_b.label} (b)")
    summary, aligned, runs = compare_runs(cfg_a, cfg_b)
    print(format_table(summary))
    print()
    print(format_table(aligned))
    out = Path(args.output or cfg_a.output_path()).with_suffix("")
    summary_path = write_table(summary, out.with_name(out.name + "_compare_summary.csv"))
    aligned_path = write_table(aligned, out.with_name(out.name + "_compare_aligned.csv"))
    print(f"\nsummary -> {summary_path}\naligned -> {aligned_path}")
    if args.figures:
        from .harness.plotting import plot_results

        fig = plot_results(runs["a"] + runs["b"], out.with_name(out.name + "_compare.png"),
                           title=f"{cfg_a.label} vs {cfg_b.label}")
        print(f"figure -> {fig}")
    return 0 if all(r.ok for rs in runs.values() for r in rs) else 3


def cmd_validate(args):
    cfg = load_config(args.config)
    mode = cfg.estimator_config().mode(cfg.k_max)
    print(f"{args.config}: ok ({cfg.problem}, {cfg.algorithm}, mode={mode}, seeds={list(cfg.seeds)})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="bilevel-vr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one config (all its seeds) and write metrics CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--no-figures", dest="figures", action="store_false", help="skip the PNG figure")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run two configs on one problem instance and summarise")
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.add_argument("--output", help="stem for the summary files (default: config A's output)")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="parse and check a config without running it")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
