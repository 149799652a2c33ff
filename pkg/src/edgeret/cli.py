"""Command line entry point: ``edgeret {gen-data,train,eval,sweep}``."""

import argparse
import logging
import os
import sys

from . import harness
from .data import generate_synthetic, save_dataset
from .errors import EdgeRetError


def _grid(text):
    return harness._floats(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--scheme", choices=harness.SCHEMES)
    common.add_argument("--snr-train", help="training SNR in dB, comma list, or 'match'")
    common.add_argument("--snr-test-grid", type=_grid, help="comma-separated test SNRs in dB")
    common.add_argument("--bandwidth", help="channel uses per query, comma list allowed")
    common.add_argument("--strategy", choices=("T3", "T13", "T13_L1", "T123"))
    common.add_argument("--seed", help="seed or comma-separated seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--metric", choices=("l2", "cosine"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="edgeret", description="Feature retrieval over simulated wireless channels.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write the synthetic dataset as feature files")
    sub.add_parser("train", parents=[common], help="train (or reuse) one checkpoint per B/snr_train/seed")
    sub.add_parser("eval", parents=[common], help="evaluate over the test SNR grid")
    sub.add_parser("sweep", parents=[common], help="full grid: train and evaluate, write results.csv")
    return p


def config_from_args(args):
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    if args.scheme:
        cfg.scheme = args.scheme
    if args.snr_train:
        cfg.snr_train = None if args.snr_train.lower() == "match" else harness._floats(args.snr_train)
    if args.snr_test_grid:
        cfg.snr_test = args.snr_test_grid
    if args.bandwidth:
        cfg.bandwidths = harness._ints(args.bandwidth)
    if args.strategy:
        cfg.plan_overrides["strategy"] = args.strategy
    if args.seed:
        cfg.seeds = harness._ints(args.seed)
    if args.out:
        cfg.out = args.out
    if args.metric:
        cfg.metric = args.metric
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "gen-data":
            directory = os.path.join(cfg.out, "data")
            save_dataset(directory, generate_synthetic(cfg.data))
            print(directory)
            return 0
        if args.command == "train":
            runner = harness.Runner(cfg)
            seen = set()
            for bandwidth, snr_train, _, seed in runner.grid():
                key = harness.model_key(cfg, bandwidth, snr_train, seed)
                if key not in seen:
                    seen.add(key)
                    runner.model(bandwidth, snr_train, seed)
                    print(runner.ckpt_path(key))
            return 0
        rows = harness.run_experiment(cfg)
        with open(os.path.join(cfg.out, "summary.txt"), encoding="utf-8") as f:
            sys.stdout.write(f.read())
        return 1 if any(r["status"].startswith("error") for r in rows) else 0
    except (EdgeRetError, OSError) as exc:
        print(f"edgeret: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
