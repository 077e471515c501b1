"""Command-line interface: ``rbm-missing <command> ...``.

Exit status is 0 on success, 2 for usage errors and 1 for runtime errors.
Every command that draws random numbers requires ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ais import AisConfig, ais_log_partition, complete_data_log_likelihood
from .bench import VARIANCE_HEADER, variance_bench
from .checks import run_checks
from .core import RbmParams
from .dataset import IncompleteDataset, apply_mask
from .io import (
    FormatError,
    load_binary_matrix,
    load_checkpoint,
    load_incomplete,
    save_binary_matrix,
    save_incomplete,
)
from .oracle import exact_log_partition
from .plots import plot_loglik, plot_variances
from .sampler import block_gibbs, clamped_gibbs
from .trainer import EXACT_EVAL_LIMIT, ConfigError, TrainConfig, train

log = logging.getLogger("rbm_missing")


class UsageError(Exception):
    """Bad combination of arguments that argparse cannot catch itself."""


def load_dataset(path) -> IncompleteDataset:
    """An ``.rbmi`` container, or any complete binary matrix format."""
    path = Path(path)
    if path.suffix == ".rbmi":
        return load_incomplete(path)
    return IncompleteDataset.complete(load_binary_matrix(path), provenance={"source": path.name})


def _named_paths(items):
    out = {}
    for item in items or ():
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"expected NAME=PATH, got {item!r}")
        if name in out:
            raise UsageError(f"evaluation split {name!r} given twice")
        out[name] = path
    return out


# -- commands ---------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = TrainConfig.from_file(args.config)
    cfg.seed = args.seed
    cfg.validate()
    dataset = load_dataset(args.data)
    evals = {name: load_dataset(p) for name, p in _named_paths(args.eval).items()}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())

    result = train(cfg, dataset, evals, checkpoint_dir=out / "checkpoints")
    result.metrics.write_csv(out / "metrics.csv")
    if not args.no_plot:
        plot_loglik(result.metrics.records, out / "loglik.png", title=f"{cfg.method}, p={cfg.missing_prob}")
    print(f"wrote {out / 'checkpoints' / 'final.ckpt'} and {out / 'metrics.csv'}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    params = ckpt.params
    if args.exact:
        log_z, stderr = exact_log_partition(params, EXACT_EVAL_LIMIT), 0.0
    else:
        res = ais_log_partition(params, AisConfig(args.temperatures, args.runs), np.random.default_rng(args.seed))
        log_z, stderr = res.log_z, res.stderr

    row = {"loglik_train": math.nan, "loglik_test": math.nan, "logZ": log_z, "logZ_stderr": stderr}
    for key, path in (("loglik_train", args.train), ("loglik_test", args.test)):
        if path is not None:
            row[key] = complete_data_log_likelihood(params, load_dataset(path), log_z)

    if args.format == "json":
        print(json.dumps({k: (None if math.isnan(v) else v) for k, v in row.items()}))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(row.keys())
        w.writerow(["nan" if math.isnan(v) else repr(v) for v in row.values()])
    return 0


def cmd_sample(args) -> int:
    params = load_checkpoint(args.checkpoint).params
    rng = np.random.default_rng(args.seed)
    if args.clamp is None:
        init = (rng.random((args.chains, params.n)) < 0.5).astype(np.float64)
        v = block_gibbs(params, init, args.steps, rng).v
    else:
        ds = load_dataset(args.clamp)
        if ds.n != params.n:
            raise ValueError(f"dataset has n={ds.n}, checkpoint has n={params.n}")
        d = np.repeat(ds.values.astype(np.float64), args.chains, axis=0)
        obs = np.repeat(ds.observed, args.chains, axis=0)
        init = (rng.random(d.shape) < 0.5).astype(np.float64)
        v = clamped_gibbs(params, d, obs, init, args.steps, rng).v
    save_binary_matrix(args.out, v)
    print(f"wrote {v.shape[0]} samples to {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    results = run_checks(args.n, args.m, args.trials, np.random.default_rng(args.seed), args.scale)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  max_err={r.error:.3e}  tol={r.tol:.0e}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def cmd_variance_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    params = RbmParams.random(args.n, args.m, rng, args.scale)
    rows = variance_bench(params, args.K, args.sets, rng)
    dest = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(dest, lineterminator="\n")
        w.writerow(VARIANCE_HEADER)
        for r in rows:
            w.writerow([r.moment, r.i, r.j, repr(r.exact), repr(r.var_mci), repr(r.var_smci)])
    finally:
        if dest is not sys.stdout:
            dest.close()
    if args.figure:
        plot_variances(rows, args.figure)
    return 0


def cmd_mask(args) -> int:
    data = load_binary_matrix(args.input, args.threshold)
    prov = {"source": Path(args.input).name, "threshold": args.threshold}
    ds = apply_mask(data, args.p, args.seed, provenance=prov)
    save_incomplete(args.out, ds)
    print(f"masked {len(ds)} rows, missing fraction {ds.missing_fraction:.4f}")
    return 0


# -- parser -----------------------------------------------------------------

def _probability(text):
    p = float(text)
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return p


def _positive(text):
    k = int(text)
    if k < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return k


def _nonnegative(text):
    k = int(text)
    if k < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbm-missing", description="RBM training on incomplete binary data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train from a key = value config file")
    p.add_argument("--config", required=True, help="config file (key = value lines)")
    p.add_argument("--data", required=True, help="training data: .rbmi, .npy, .csv or IDX archive")
    p.add_argument("--eval", action="append", metavar="NAME=PATH", help="evaluation split (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True, help="overrides the config seed")
    p.add_argument("--no-plot", action="store_true", help="skip the log-likelihood figure")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="log-likelihood of a checkpoint via AIS (or exactly)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", help="complete training data")
    p.add_argument("--test", help="complete test data")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--temperatures", type=_positive, default=1000)
    p.add_argument("--runs", type=_positive, default=100)
    p.add_argument("--exact", action="store_true", help=f"enumerate ln Z (n <= {EXACT_EVAL_LIMIT})")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="run Gibbs chains from a checkpoint and dump the visibles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--chains", type=_positive, default=100, help="chains (per data point with --clamp)")
    p.add_argument("--steps", type=_nonnegative, default=1000)
    p.add_argument("--clamp", help="dataset whose observed entries are pinned")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help=".npy or .csv output")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("oracle-check", help="compare code paths against exact enumeration")
    p.add_argument("--n", type=_positive, default=5)
    p.add_argument("--m", type=_positive, default=4)
    p.add_argument("--trials", type=_positive, default=20)
    p.add_argument("--scale", type=float, default=1.0, help="std of the random parameters")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("variance-bench", help="MCI vs SMCI estimator variances as CSV")
    p.add_argument("--n", type=_positive, default=6)
    p.add_argument("--m", type=_positive, default=4)
    p.add_argument("--K", type=_positive, default=100, help="samples per set")
    p.add_argument("--sets", type=_positive, default=200, help="independent sample sets")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--figure", help="also write a scatter plot here")
    p.set_defaults(func=cmd_variance_bench)

    p = sub.add_parser("mask", help="mask a complete binary dataset into an .rbmi file")
    p.add_argument("--input", required=True, help=".npy, .csv or IDX archive")
    p.add_argument("--p", type=_probability, required=True, help="missing probability")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threshold", type=float, default=127.5, help="binarization threshold for IDX input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rbm-missing: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"rbm-missing: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
