"""Command line entry point: ``mfpm run|summarize|oracle|synth``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .harness import ConfigError, ExperimentConfig, SummaryError, run_experiment, summarize, \
    with_overrides
from .network import (NetworkFormatError, ParamConfig, build_multi_level, load_network,
                      random_edge_list, write_edge_list)
from .oracle import EnumerationTooLarge, exact_optimum, exact_P
from .policies import DETERMINISTIC


def _run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    cfg = with_overrides(cfg, workers=args.workers, output=args.output,
                         knapsack=DETERMINISTIC if args.deterministic_knapsack else None)
    out = run_experiment(cfg)
    print(out)
    return 0


def _summarize(args) -> int:
    summarize(args.csv)
    return 0


def _oracle(args) -> int:
    pc = ParamConfig.from_file(args.config) if args.config else ParamConfig(q=args.q)
    net = load_network(args.graph, pc)
    mlg = build_multi_level(net)
    index = {lab: i for i, lab in enumerate(net.labels)}
    if args.seeds is not None:
        labels = [s for s in args.seeds.split(",") if s]
        unknown = [s for s in labels if s not in index]
        if unknown:
            raise NetworkFormatError(f"unknown node labels {unknown}")
        print(f"P({{{','.join(labels)}}}) = {exact_P(net, mlg, [index[s] for s in labels]):.12g}")
    if args.budget is not None:
        best, value = exact_optimum(net, mlg, args.budget)
        names = ",".join(net.labels[i] for i in sorted(best))
        print(f"optimum at B={args.budget:g}: {{{names}}} value {value:.12g}")
    return 0


def _synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    write_edge_list(args.out, random_edge_list(args.nodes, args.edges, rng))
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfpm", description="Multi-feature budgeted profit "
                                 "maximization experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and write CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--output")
    p.add_argument("--deterministic-knapsack", action="store_true",
                   help="never include the overflowing node (off the expected-budget rule)")
    p.set_defaults(func=_run)

    p = sub.add_parser("summarize", help="per-(policy, budget) means of a result CSV")
    p.add_argument("csv")
    p.set_defaults(func=_summarize)

    p = sub.add_parser("oracle", help="exact queries on a tiny graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--config", help="key-value file with q, rng_seed, cost/profit ranges")
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--seeds", help="comma-separated node labels; prints exact P")
    p.add_argument("--budget", type=float, help="prints the exact optimum under this budget")
    p.set_defaults(func=_oracle)

    p = sub.add_parser("synth", help="write a random G(n, m) edge list")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--edges", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SummaryError, NetworkFormatError, EnumerationTooLarge, OSError,
            ValueError) as exc:
        print(f"mfpm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
