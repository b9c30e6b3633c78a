"""Command-line experiment runner.

Subcommands: run, pretrain, rescale, report. Output lands under the
config's output_dir, prefixed by $AUXWEIGHT_OUT when set. Exit code is 0
only when every seed completed.
"""

import argparse
import sys

from .errors import AuxweightError
from .experiment import (DEFAULT_RESCALE_GRID, load_config, report_directory,
                         rescale_experiment, run_experiment, run_pretrain)


def _parse_grid(text):
    pairs = []
    for chunk in text.split(";"):
        parts = chunk.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(
                f"grid entries are 'edge,attr' pairs separated by ';', got {chunk!r}")
        pairs.append((float(parts[0]), float(parts[1])))
    return tuple(pairs)


def _print_aggregate(agg):
    for metric, stats in sorted(agg.items()):
        print(f"  {metric}: {stats['mean']:.4f} +- {stats['std']:.4f}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="auxweight",
        description="Adaptive auxiliary-task weighting experiments on GNNs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment over its seeds")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="override the output directory")

    p_pre = sub.add_parser("pretrain", help="pre-train and save checkpoints")
    p_pre.add_argument("config")
    p_pre.add_argument("--out", default=None)

    p_res = sub.add_parser("rescale", help="loss-rescale grid experiment")
    p_res.add_argument("config")
    p_res.add_argument("--grid", type=_parse_grid, default=DEFAULT_RESCALE_GRID,
                       help="scale pairs, e.g. '1,1;1,5;5,1;5,5'")
    p_res.add_argument("--out", default=None)

    p_rep = sub.add_parser("report", help="aggregate seed summaries in a directory")
    p_rep.add_argument("directory")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            report = run_experiment(load_config(args.config), out_dir=args.out)
            print(f"{report['name']}: {report['completed']}/{len(report['seeds'])} "
                  f"seeds completed")
            _print_aggregate(report["aggregate"])
            for note in report["notes"]:
                print(f"note: {note}")
            return 0 if report["completed"] == len(report["seeds"]) else 1
        if args.command == "pretrain":
            report = run_pretrain(load_config(args.config), out_dir=args.out)
            print(f"pretrained {len(report['seeds'])} seeds, "
                  f"{len(report['aborted'])} aborted")
            return 0 if not report["aborted"] else 1
        if args.command == "rescale":
            result = rescale_experiment(load_config(args.config),
                                        scales=args.grid, out_dir=args.out)
            for key, agg in result["matrix"].items():
                print(key)
                _print_aggregate(agg)
            return 0 if result["all_completed"] else 1
        if args.command == "report":
            report = report_directory(args.directory)
            print(f"{report['completed']} seeds completed, "
                  f"{len(report['aborted'])} aborted")
            _print_aggregate(report["aggregate"])
            return 0
    except AuxweightError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
