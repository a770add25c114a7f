"""Command-line front end.

Subcommands: ``synth``, ``eval``, ``probe`` and ``report``. Exit status is
0 on success, 1 on invalid input or usage, 2 on I/O failure. All randomness
derives from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .errors import TrainingError, ValidationError
from .report import RunConfig, dumps, render_report, run_eval, run_probe
from .synth import GeneratorSpec, version_preset, write_dataset

log = logging.getLogger("disentangle_eval")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_inputs(p):
    g = p.add_argument_group("inputs")
    g.add_argument("--data", metavar="DIR",
                   help="dataset directory with manifest.json (as written by synth)")
    g.add_argument("--factors-csv", metavar="PATH", help="factor CSV (alternative to --data)")
    g.add_argument("--codes", metavar="PATH", help="code tensor, .bin or .csv (with --factors-csv)")
    g.add_argument("--factor", action="append", dest="factors", metavar="NAME",
                   help="factor to evaluate; repeat for several "
                        "(default: the manifest's eval factors, else all columns)")
    g.add_argument("--factor-bins", type=int, default=10,
                   help="bins for continuous factors (default: %(default)s)")
    g.add_argument("--factor-binning", choices=("uniform", "quantile"), default="quantile",
                   help="binning of continuous factors (default: %(default)s)")


def _add_training(p):
    g = p.add_argument_group("classifier training")
    g.add_argument("--epochs", type=int, default=100, help="default: %(default)s")
    g.add_argument("--batch-size", type=int, default=128, help="default: %(default)s")
    g.add_argument("--lr", type=float, default=0.05, help="default: %(default)s")
    g.add_argument("--l2", type=float, default=1e-4, help="default: %(default)s")
    g.add_argument("--seed", type=int, default=0,
                   help="master seed; every sub-seed derives from it (default: %(default)s)")


def build_parser():
    parser = _Parser(prog="disentangle-eval",
                     description="Disentanglement metrics and linear probing for latent codes.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=("small", "medium", "large"),
                     help="grid of one of the released dataset versions")
    src.add_argument("--spec", metavar="JSON", help="custom generator spec")
    p.add_argument("--seed", type=int, default=0, help="default: %(default)s")
    p.add_argument("--dims", type=int, default=16,
                   help="code dimensions for presets (default: %(default)s)")
    p.add_argument("--seq-len", type=int, default=256,
                   help="time steps for presets (default: %(default)s)")
    p.add_argument("--out-dir", required=True, metavar="DIR")

    p = sub.add_parser("eval", help="compute MIG, JEMMIG, IRS and Explicitness")
    _add_inputs(p)
    g = p.add_argument_group("discretization")
    g.add_argument("--pooling", choices=("mean", "maxabs", "rms"), default="mean",
                   help="time-axis reduction before binning (default: %(default)s)")
    g.add_argument("--code-bins", type=int, default=20, help="default: %(default)s")
    g.add_argument("--binning", choices=("uniform", "quantile"), default="uniform",
                   help="code binning strategy (default: %(default)s)")
    p.add_argument("--irs-min-group", type=int, default=2,
                   help="smallest usable intervention cell (default: %(default)s)")
    _add_training(p)
    p.add_argument("--split-seed", type=int, default=None,
                   help="seed of the Explicitness train/test split (default: from --seed)")
    p.add_argument("--out", default="report.json", help="JSON report path (default: %(default)s)")
    p.add_argument("--format", action="append", choices=("json", "markdown", "csv"),
                   help="extra views written next to --out; repeatable")

    p = sub.add_parser("probe", help="dimension-wise linear probing")
    _add_inputs(p)
    p.add_argument("--runs", type=int, default=5, help="default: %(default)s")
    _add_training(p)
    p.add_argument("--out", default="probe.json",
                   help="JSON result path; trend CSVs go to the same directory (default: %(default)s)")

    p = sub.add_parser("report", help="render a JSON report as markdown or CSV")
    p.add_argument("--input", required=True, metavar="JSON")
    p.add_argument("--format", choices=("json", "markdown", "csv"), default="markdown",
                   help="default: %(default)s")
    p.add_argument("--out", required=True)
    return parser


def _config(args):
    return RunConfig(
        data=args.data,
        factors_csv=args.factors_csv,
        codes=args.codes,
        factors=args.factors,
        pooling=getattr(args, "pooling", "mean"),
        binning=getattr(args, "binning", "uniform"),
        code_bins=getattr(args, "code_bins", 20),
        factor_binning=args.factor_binning,
        factor_bins=args.factor_bins,
        irs_min_group=getattr(args, "irs_min_group", 2),
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        l2=args.l2,
        split_seed=getattr(args, "split_seed", None),
        seed=args.seed,
        runs=getattr(args, "runs", 5),
    )


def _write(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_synth(args):
    if args.preset:
        spec = version_preset(args.preset, args.dims, args.seq_len, args.seed)
    else:
        with open(args.spec, encoding="utf-8") as fh:
            obj = json.load(fh)
        obj["seed"] = args.seed
        spec = GeneratorSpec.from_json(obj)
    manifest = write_dataset(spec, args.out_dir)
    print(f"wrote {manifest.total_utterances} samples to {args.out_dir}")


def cmd_eval(args):
    report = run_eval(_config(args))
    _write(args.out, dumps(report))
    stem = os.path.splitext(args.out)[0]
    for fmt in args.format or ():
        ext = {"json": ".json", "markdown": ".md", "csv": ".csv"}[fmt]
        if fmt != "json":
            render_report(report, fmt, stem + ext)
    print(f"report written to {args.out}")


def cmd_probe(args):
    result = run_probe(_config(args), trend_dir=os.path.dirname(args.out) or ".")
    _write(args.out, dumps(result))
    print(f"probe results written to {args.out}")


def cmd_report(args):
    with open(args.input, encoding="utf-8") as fh:
        report = json.load(fh)
    if "config" not in report or "factors" not in report:
        raise ValidationError(f"{args.input}: malformed report (missing config or factors)")
    for path in render_report(report, args.format, args.out):
        print(path)


COMMANDS = {"synth": cmd_synth, "eval": cmd_eval, "probe": cmd_probe, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValidationError, TrainingError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
