"""Command-line entry point: ``rtm <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import RtmConfig, _atomic_write_text, load_model, predict, save_model, train_rtm
from .dataset import (
    DomainPair,
    LabelSet,
    append_constant,
    load_dense,
    load_labels,
    load_sparse,
    standardize,
)
from .errors import MissingFileError, RtmError, ValidationError
from .evaluation import SweepReport, accuracy, compare, dump_report_json, parse_grid, sweep_p
from .oracle import mc_convergence

EXIT_CODES = """\
exit status:
  0  success
  1  unexpected internal error
  2  usage error (unknown flag, missing required flag, malformed number)
  3  invalid value (p outside [0,1), alpha <= 0, J < 1, bad grid, bad labels)
  4  missing input file
  5  dimension mismatch (feature counts, label counts)
  6  malformed input file (ragged rows, unparsable cells, bad sparse indices)
  7  numeric failure (Q + alpha*I not positive definite)
  8  protocol error (e.g. sweep without target labels)
  9  capacity error
"""

DEFAULTS = {"alpha": 1.0, "p": 0.5, "seed": 42, "J": 1000, "grid": "default"}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"],
                   help="integer seed for all randomness; ignored by deterministic commands (default: 42)")
    p.add_argument("--config", metavar="FILE",
                   help="key=value file of defaults for this command; flags override it")


def _feature_opts(p: argparse.ArgumentParser):
    p.add_argument("--format", choices=("dense", "sparse"), default="dense",
                   help="feature file format: dense CSV rows or sparse '<label> i:v' lines (default: dense)")
    p.add_argument("--append-constant", action="store_true",
                   help="append a constant-1 feature (bias) before training/prediction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtm",
        description="Randomized Transferable Machine: ridge classification under marginalized dropout noise.",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=EXIT_CODES,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(sp)
        return sp

    sp = add("train", "train an RTM model on labelled source features")
    sp.add_argument("--features", required=True, help="source feature file")
    sp.add_argument("--labels", help="source label file (one integer per line; not used with --format sparse)")
    sp.add_argument("--p", type=float, default=DEFAULTS["p"], help="dropout probability in [0, 1) (default: 0.5)")
    sp.add_argument("--alpha", type=float, default=DEFAULTS["alpha"], help="ridge coefficient > 0 (default: 1.0)")
    sp.add_argument("--out", required=True, help="model file to write")
    sp.add_argument("--task", default="", help="task name recorded with the model")
    _feature_opts(sp)
    sp.set_defaults(func=cmd_train)

    sp = add("predict", "predict class ids with a trained model")
    sp.add_argument("--model", required=True, help="model file written by 'train'")
    sp.add_argument("--features", required=True, help="feature file to classify")
    sp.add_argument("--out", required=True, help="output file of class ids, one per line")
    sp.add_argument("--scores", help="optional CSV of per-class scores, one sample per line")
    _feature_opts(sp)
    sp.set_defaults(func=cmd_predict)

    sp = add("eval", "print the accuracy of predicted class ids")
    sp.add_argument("--pred", required=True, help="predicted class ids, one per line")
    sp.add_argument("--labels", required=True, help="true class ids, one per line")
    sp.set_defaults(func=cmd_eval)

    sp = add("sweep", "evaluate RTM over a grid of dropout rates on a labelled target domain")
    sp.add_argument("--src-features", required=True, help="source feature file")
    sp.add_argument("--src-labels", help="source label file (dense format only)")
    sp.add_argument("--tgt-features", required=True, help="target feature file")
    sp.add_argument("--tgt-labels", help="target label file (dense format only)")
    sp.add_argument("--alpha", type=float, default=DEFAULTS["alpha"], help="ridge coefficient > 0 (default: 1.0)")
    sp.add_argument("--grid", default=DEFAULTS["grid"],
                    help="'default' (0.05..0.95 step 0.05) or comma-separated p values in [0, 1)")
    sp.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    sp.add_argument("--task", help="task name (default: derived from file names)")
    sp.add_argument("--standardize", action="store_true",
                    help="z-score features with source mean/std applied to both domains")
    _feature_opts(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = add("compare", "merge sweep reports into a baseline-vs-RTM table")
    sp.add_argument("--reports", nargs="+", required=True, help="sweep JSON reports")
    sp.add_argument("--groups", help="CSV of 'task,group' lines for per-group mean rows")
    sp.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.txt")
    sp.set_defaults(func=cmd_compare)

    sp = add("mc-check", "measure Monte-Carlo corruption convergence to the closed form")
    sp.add_argument("--features", required=True, help="feature file")
    sp.add_argument("--labels", help="label file (dense format only)")
    sp.add_argument("--p", type=float, default=DEFAULTS["p"], help="dropout probability in [0, 1) (default: 0.5)")
    sp.add_argument("--alpha", type=float, default=DEFAULTS["alpha"], help="ridge coefficient > 0 (default: 1.0)")
    sp.add_argument("--J-list", dest="J_list", default=str(DEFAULTS["J"]),
                    help="comma-separated numbers of corrupted copies, each >= 1 (default: 1000)")
    sp.add_argument("--repeats", type=int, default=1,
                    help="average over this many seeds: seed, seed+1, ... (default: 1)")
    sp.add_argument("--out", required=True, help="output CSV with columns J,relative_error")
    sp.add_argument("--format", choices=("dense", "sparse"), default="dense",
                    help="feature file format (default: dense)")
    sp.add_argument("--standardize", action="store_true",
                    help="z-score features before the check")
    sp.add_argument("--append-constant", action="store_true", help="append a constant-1 feature")
    sp.set_defaults(func=cmd_mc_check)

    return parser, sub.choices


# ---------------------------------------------------------------- helpers

def _load(path, labels_path, fmt, label_map=None, n_features=None):
    if fmt == "sparse":
        return load_sparse(path, n_features=n_features, label_map=label_map)
    Z, Y = load_dense(path, labels_path)
    return Z, Y


def _require_labels(args, attr):
    if args.format == "dense" and getattr(args, attr) is None:
        raise ValidationError(f"--{attr.replace('_', '-')} is required with --format dense")


def _write(path, text):
    _atomic_write_text(path, text)


def _prefix(out, suffixes):
    p = Path(out)
    return p.with_suffix("") if p.suffix in suffixes else p


def _check_p(p):
    if not (0.0 <= p < 1.0):
        raise ValidationError(f"--p must be in [0, 1), got {p}")


def _check_alpha(a):
    if not (a > 0.0) or not np.isfinite(a):
        raise ValidationError(f"--alpha must be > 0, got {a}")


# ---------------------------------------------------------------- commands

def cmd_train(args):
    _check_p(args.p)
    _check_alpha(args.alpha)
    _require_labels(args, "labels")
    Z, Y = _load(args.features, args.labels, args.format)
    if args.append_constant:
        Z = append_constant(Z)
    model = train_rtm(Z, Y, RtmConfig(args.p, args.alpha), task=args.task)
    save_model(model, args.out)
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    if args.format == "sparse":
        Z, _ = load_sparse(args.features)
        if Z.k < model.k - int(args.append_constant):
            Z, _ = load_sparse(args.features, n_features=model.k - int(args.append_constant))
    else:
        Z, _ = load_dense(args.features)
    if args.append_constant:
        Z = append_constant(Z)
    ids, scores = predict(model, Z)
    _write(args.out, "".join(f"{i}\n" for i in ids))
    if args.scores:
        _write(args.scores, "".join(",".join(format(v, ".17g") for v in col) + "\n" for col in scores.T))
    return 0


def cmd_eval(args):
    pred = load_labels(args.pred)
    truth = load_labels(args.labels)
    print(f"accuracy {accuracy(pred, truth)!r}")
    return 0


def _task_name(args):
    if args.task:
        return args.task
    return f"{Path(args.src_features).stem}->{Path(args.tgt_features).stem}"


def cmd_sweep(args):
    _check_alpha(args.alpha)
    grid = parse_grid(args.grid)
    _require_labels(args, "src_labels")
    if args.format == "sparse":
        Zs, Ys = load_sparse(args.src_features)
        Zt, Yt = load_sparse(args.tgt_features, label_map=Ys.label_map)
        k = max(Zs.k, Zt.k)
        if Zs.k < k:
            Zs, Ys = load_sparse(args.src_features, n_features=k)
        if Zt.k < k:
            Zt, Yt = load_sparse(args.tgt_features, n_features=k, label_map=Ys.label_map)
        C = max(Ys.C, Yt.C)
        Ys, Yt = LabelSet(Ys.class_ids, C), LabelSet(Yt.class_ids, C)
    else:
        Zs, Ys = load_dense(args.src_features, args.src_labels)
        Zt, Yt = load_dense(args.tgt_features, args.tgt_labels)
    if args.standardize:
        Zs, Zt = standardize(Zs, Zt)
    if args.append_constant:
        Zs, Zt = append_constant(Zs), append_constant(Zt)
    pair = DomainPair(Zs, Ys, Zt, Yt, task_name=_task_name(args))
    report = sweep_p(pair, args.alpha, grid)

    base = _prefix(args.out, {".csv", ".json"})
    _write(f"{base}.csv", report.to_csv())
    _write(f"{base}.json", dump_report_json(report))
    print(f"{report.task_name}: baseline {report.baseline_accuracy!r} "
          f"best {report.best_accuracy!r} at p={report.best_p!r} (selection: {report.selection})")
    return 0


def _read_groups(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"no such file: {p}")
    groups = {}
    for row in csv.reader(io.StringIO(p.read_text(encoding="utf-8"))):
        if not row or row[0].startswith("#"):
            continue
        if len(row) != 2:
            raise ValidationError(f"{p}: group lines must be 'task,group', got {row}")
        groups[row[0].strip()] = row[1].strip()
    return groups


def cmd_compare(args):
    reports = []
    for path in args.reports:
        p = Path(path)
        if not p.is_file():
            raise MissingFileError(f"no such report: {p}")
        try:
            obj = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{p}: not valid JSON ({e})") from None
        reports.append(SweepReport.from_json(obj))
    table = compare(reports, _read_groups(args.groups))
    base = _prefix(args.out, {".csv", ".txt"})
    _write(f"{base}.csv", table.to_csv())
    text = table.to_text()
    _write(f"{base}.txt", text)
    sys.stdout.write(text)
    return 0


def _parse_J_list(spec):
    try:
        Js = [int(s) for s in spec.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"--J-list must be comma-separated integers, got {spec!r}") from None
    if not Js or min(Js) < 1:
        raise ValidationError("--J-list values must be >= 1")
    return Js


def cmd_mc_check(args):
    _check_p(args.p)
    _check_alpha(args.alpha)
    if args.repeats < 1:
        raise ValidationError("--repeats must be >= 1")
    Js = _parse_J_list(args.J_list)
    _require_labels(args, "labels")
    Z, Y = _load(args.features, args.labels, args.format)
    if args.standardize:
        (Z,) = standardize(Z)
    if args.append_constant:
        Z = append_constant(Z)
    seeds = [args.seed + i for i in range(args.repeats)]
    rows = mc_convergence(Z, Y, RtmConfig(args.p, args.alpha), Js, seeds)
    text = "J,relative_error\n" + "".join(f"{J},{err!r}\n" for J, err, _ in rows)
    _write(args.out, text)
    return 0


# ---------------------------------------------------------------- entry

_BOOL_KEYS = {"standardize", "append_constant"}


def _config_defaults(path, sp: argparse.ArgumentParser):
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"no such config file: {p}")
    known = {a.dest for a in sp._actions}
    out = {}
    for line_no, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in known or key in ("help", "config", "func"):
            raise ValidationError(f"{p}: line {line_no}: unknown setting {line!r}")
        value = value.strip()
        if key in _BOOL_KEYS:
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif key == "reports":
            out[key] = value.split()
        else:
            out[key] = value
    return out


def _resolved(args) -> str:
    d = {k: v for k, v in vars(args).items() if k != "func"}
    return json.dumps(d, sort_keys=True, default=str)


def _apply_config(argv, subparsers):
    """Load ``--config`` defaults into the chosen subparser before parsing."""
    command = next((a for a in argv if not a.startswith("-")), None)
    if command not in subparsers:
        return
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return
    sp = subparsers[command]
    defaults = _config_defaults(path, sp)
    for action in sp._actions:
        if action.dest in defaults:
            action.required = False
    sp.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        _apply_config(argv, subparsers)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    except RtmError as e:
        print(f"rtm: error: {e}", file=sys.stderr)
        return e.exit_code
    try:
        print(f"rtm {args.command}: {_resolved(args)}", file=sys.stderr)
        return args.func(args)
    except RtmError as e:
        print(f"rtm {args.command}: error: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"rtm {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
