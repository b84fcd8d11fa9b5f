"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error, 3 a theory check failed.
Diagnostics go to standard error; results are written to ``--out-dir``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DataError,
    genesis_text,
    largest_connected_component,
    load_covariates,
    load_edge_list,
    strip_verse_references,
    tokenize_adjacency_counts,
    write_edge_list,
)
from .evaluation import cross_validate, roc_curve, write_auc_table, write_predictions, write_roc
from .mcmc import SamplerConfig, posterior_predictive_mean, run_chain, write_trace_csv
from .models import MODEL_KINDS, ClassState, DistanceState
from .simulate import simulate
from .theory import check_theory

log = logging.getLogger("eigenmodel")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_THEORY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {v}")
    return v


def _add_sampler_flags(p):
    p.add_argument("--data", required=True, help="edge list (TSV: label, label, value)")
    p.add_argument("--covariates", help="dyad covariates (TSV: label, label, x1..xp)")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--k", type=_positive_int, required=True, help="latent dimension / classes")
    p.add_argument("--iterations", type=_positive_int, default=10_000)
    p.add_argument("--burn", type=_nonneg_int, default=2_500)
    p.add_argument("--thin", type=_positive_int, default=10)
    p.add_argument("--mh-step", type=_positive_float, default=0.5)
    p.add_argument("--seed", type=_nonneg_int, default=0)


def build_parser():
    parser = _Parser(prog="eigenmodel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest-genesis", help="build the word-adjacency sociomatrix")
    p.add_argument("text", nargs="?",
                   help="plain text; chapter:verse markers are dropped (default: bundled Genesis 1)")
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("lcc", help="restrict an edge list to its largest component")
    p.add_argument("edges")
    p.add_argument("--threshold", type=int, default=0)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("fit", help="run one chain on the full data")
    _add_sampler_flags(p)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("cv", help="cross-validated predictions, ROC and AUC")
    _add_sampler_flags(p)
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--name", help="dataset name in auc_table.csv (default: file stem)")
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("check-theory", help="run the representation property battery")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--restarts", type=_positive_int, default=200)
    p.add_argument("--out-dir", help="also write theory_report.txt here")

    p = sub.add_parser("simulate", help="draw a sociomatrix from a model's prior")
    p.add_argument("--model", required=True, choices=MODEL_KINDS)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--threshold", type=float, action="append",
                   help="threshold(s); repeat for ordinal data (default 0)")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--out-dir", default=".")
    return parser


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, args, extra=()):
    lines = [f"eigenmodel {__version__}", f"command {args.command}"]
    for key, val in sorted(vars(args).items()):
        if key not in ("command", "verbose"):
            lines.append(f"{key} {val}")
    lines += list(extra)
    (out / "run-manifest.txt").write_text("\n".join(lines) + "\n")


def _load(args):
    Y = load_edge_list(args.data)
    X = load_covariates(args.covariates, Y).x if args.covariates else None
    return Y, X


def _config(args):
    if args.burn >= args.iterations:
        raise UsageError("--burn must be smaller than --iterations")
    return SamplerConfig(args.iterations, args.burn, args.thin, args.mh_step, True, args.seed)


def cmd_ingest_genesis(args):
    text = Path(args.text).read_text(encoding="utf-8") if args.text else genesis_text()
    Y = tokenize_adjacency_counts(strip_verse_references(text))
    out = _out_dir(args.out_dir)
    write_edge_list(Y, out / "genesis.tsv")
    log.info("vocabulary size %d, %d non-zero dyads", Y.n, int(np.sum(Y.values > 0)))
    _write_manifest(out, args, [f"vocabulary {Y.n}", f"levels {list(map(int, Y.value_levels))}"])
    return EXIT_OK


def cmd_lcc(args):
    Y = load_edge_list(args.edges)
    sub = largest_connected_component(Y, args.threshold)
    out = _out_dir(args.out_dir)
    write_edge_list(sub, out / "lcc.tsv")
    log.info("largest component: %d of %d nodes", sub.n, Y.n)
    _write_manifest(out, args, [f"nodes {sub.n}"])
    return EXIT_OK


def cmd_fit(args):
    config = _config(args)
    Y, X = _load(args)
    trace = run_chain(Y, X, args.model, args.k, config)
    out = _out_dir(args.out_dir)
    write_trace_csv(trace, out / "trace.csv")
    yhat = posterior_predictive_mean(trace)
    iu, ju = Y.pairs()
    with open(out / "fitted.tsv", "w", newline="") as fh:
        fh.write("i\tj\ty\tyhat\n")
        for i, j, v, o, p in zip(iu, ju, Y.values, Y.observed, yhat):
            fh.write(f"{Y.labels[i]}\t{Y.labels[j]}\t{int(v) if o else 'NA'}\t{float(p)!r}\n")
    extra = [f"samples {trace.count}"]
    if args.model == "dist":
        extra.append(f"mh_step_final {trace.mh_step!r}")
        extra.append(f"acceptance {trace.acceptance_rate!r}")
    _write_manifest(out, args, extra)
    return EXIT_OK


def cmd_cv(args):
    config = _config(args)
    Y, X = _load(args)
    pred = cross_validate(Y, X, args.model, args.k, args.folds, config, jobs=args.jobs)
    roc = roc_curve(pred)
    out = _out_dir(args.out_dir)
    write_predictions(Y, pred, out / "predictions.tsv")
    write_roc(roc, out / "roc.tsv")
    name = args.name or Path(args.data).stem
    write_auc_table({(name, args.model, args.k): roc.auc}, out / "auc_table.csv")
    log.info("%s %s K=%d: AUC %.4f", name, args.model, args.k, roc.auc)
    _write_manifest(out, args, [f"auc {roc.auc!r}"])
    return EXIT_OK


def cmd_check_theory(args):
    checks = check_theory(seed=args.seed, restarts=args.restarts)
    report = "\n".join(c.line() for c in checks) + "\n"
    sys.stdout.write(report)
    if args.out_dir:
        out = _out_dir(args.out_dir)
        (out / "theory_report.txt").write_text(report)
        _write_manifest(out, args)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_THEORY


def cmd_simulate(args):
    thresholds = tuple(sorted(args.threshold)) if args.threshold else (0.0,)
    if len(set(thresholds)) != len(thresholds):
        raise UsageError("thresholds must be distinct")
    sim = simulate(args.model, args.n, args.k, thresholds=thresholds, seed=args.seed)
    out = _out_dir(args.out_dir)
    write_edge_list(sim.Y, out / "simulated.tsv")
    lat = sim.latent
    with open(out / "latent.tsv", "w", newline="") as fh:
        if isinstance(lat, ClassState):
            fh.write("node\tclass\n")
            for lab, c in zip(sim.Y.labels, lat.labels):
                fh.write(f"{lab}\t{int(c)}\n")
        else:
            U = lat.positions if isinstance(lat, DistanceState) else lat.vectors
            fh.write("node\t" + "\t".join(f"u{k + 1}" for k in range(U.shape[1])) + "\n")
            for lab, row in zip(sim.Y.labels, U):
                fh.write(lab + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
    _write_manifest(out, args, [f"density {float(np.mean(sim.Y.values > 0))!r}"])
    return EXIT_OK


COMMANDS = {
    "ingest-genesis": cmd_ingest_genesis,
    "lcc": cmd_lcc,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "check-theory": cmd_check_theory,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"eigenmodel: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as e:
        print(f"eigenmodel: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
