"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 validation, 3 numerical/runtime failure.
Failures print one JSON line ``{"error": ..., "code": ..., "message": ...}``
to stderr.
"""
import argparse
import json
import logging
import sys

from . import __version__
from .checkpoint import read_checkpoint, save_checkpoint
from .compare import compare_harness, write_compare_csv
from .data import load_dataset
from .errors import NumericalError, TrpError, ValidationError
from .flops import count_flops
from .linalg import energy_ratio
from .lowrank import Scheme
from .models import model_zoo, spec_of
from .trp import TrpConfig, final_prune_and_export, train

EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"config {path} must hold a JSON object")
    return TrpConfig.from_dict(raw)


def _config_from_metadata(meta):
    if "config" in meta:
        return TrpConfig.from_dict(meta["config"])
    return TrpConfig()


def _shape_arg(text):
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"--input-shape must look like c,h,w, got {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise ValidationError(f"--input-shape must be three positive integers, got {text!r}")
    return dims


def cmd_train(args):
    cfg = _load_config(args.config)
    ds = load_dataset(args.data, cfg.n_train, cfg.n_test)
    spec = model_zoo(cfg.model, ds.input_shape, ds.num_classes)
    model, report = train(spec, ds, cfg, metrics_path=args.metrics)
    meta = {"config": cfg.to_dict(), "seed": cfg.seed, "iterations": len(report.records),
            "data": str(args.data), "test_accuracy": report.final_test_accuracy}
    save_checkpoint(model, args.out, metadata=meta)
    print(f"trained {cfg.model} for {len(report.records)} iterations; "
          f"test top1 {report.final_test_accuracy:.4f}")


def cmd_decompose(args):
    e = energy_ratio(args.energy)
    ck = read_checkpoint(args.inp)
    cfg = _config_from_metadata(ck.metadata)
    cfg.scheme = Scheme.parse(args.scheme).value
    fact = final_prune_and_export(ck.model, cfg, e)
    ranks = [layer.rank for layer in fact.layers if hasattr(layer, "rank")]
    meta = dict(ck.metadata)
    meta["decomposed"] = {"scheme": cfg.scheme, "energy": e, "ranks": ranks}
    save_checkpoint(fact, args.out, metadata=meta)
    print(f"decomposed with {cfg.scheme} scheme at e={e}: ranks {ranks}")


def cmd_eval(args):
    ck = read_checkpoint(args.model)
    cfg = _config_from_metadata(ck.metadata)
    ds = load_dataset(args.data, cfg.n_train, cfg.n_test)
    acc = ck.model.accuracy(ds.test_x, ds.test_y)
    print(f"top1 {acc:.4f}")


def cmd_flops(args):
    ck = read_checkpoint(args.model)
    shape = _shape_arg(args.input_shape) if args.input_shape else None
    report = count_flops(spec_of(ck.model), shape)
    print(json.dumps(report.to_dict(), sort_keys=True))


def cmd_compare(args):
    cfg = _load_config(args.config)
    energies = [energy_ratio(v) for v in args.energies.split(",") if v.strip()]
    if not energies:
        raise ValidationError("--energies needs at least one value")
    ds = load_dataset(args.data, cfg.n_train, cfg.n_test)
    rows = compare_harness(cfg, ds, energies)
    write_compare_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


def build_parser():
    p = _Parser(prog="trprune", description="Trained Rank Pruning for small CNNs.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    t = sub.add_parser("train", help="train a model (TRP, TRP+Nu or plain SGD)")
    t.add_argument("--config", required=True, help="JSON file with TrpConfig fields")
    t.add_argument("--data", required=True, help="dataset directory or synthetic[:seed]")
    t.add_argument("--out", required=True, help="checkpoint to write")
    t.add_argument("--metrics", help="per-iteration metrics CSV")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decompose", help="factorize a trained checkpoint")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--scheme", required=True, choices=[s.value for s in Scheme])
    d.add_argument("--energy", required=True, type=float)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decompose)

    ev = sub.add_parser("eval", help="print top-1 test accuracy")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.set_defaults(func=cmd_eval)

    fl = sub.add_parser("flops", help="print the MAC report as JSON")
    fl.add_argument("--model", required=True)
    fl.add_argument("--input-shape", help="c,h,w (defaults to the model's input shape)")
    fl.set_defaults(func=cmd_flops)

    c = sub.add_parser("compare", help="baseline vs TRP vs TRP+Nu truncation sweep")
    c.add_argument("--config", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--energies", required=True, help="comma-separated energy ratios")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def _fail(kind, code, message):
    print(json.dumps({"error": kind, "code": code, "message": str(message)}), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a subcommand is required")
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        return _fail(type(exc).__name__, EXIT_VALIDATION, exc)
    except (NumericalError, FloatingPointError) as exc:
        return _fail(type(exc).__name__, EXIT_RUNTIME, exc)
    except (TrpError, OSError) as exc:
        return _fail(type(exc).__name__, EXIT_RUNTIME, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
