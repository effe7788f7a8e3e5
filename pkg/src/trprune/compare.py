"""Paired baseline / TRP / TRP+Nu experiment with post-hoc truncation sweeps."""
import csv
import dataclasses
import logging

from .flops import count_flops
from .models import model_zoo, spec_of
from .trp import final_prune_and_export, train

log = logging.getLogger(__name__)

COMPARE_HEADER = ["method", "energy", "period", "lambda", "train_energy", "top1_before",
                  "top1_after_truncation", "drop", "speedup", "ranks"]
DEFAULT_NU_LAMBDA = 3e-4


def method_configs(cfg):
    """The three training variants, sharing seed, data order and lr schedule."""
    nu = cfg.lambda_ if cfg.lambda_ > 0 else DEFAULT_NU_LAMBDA
    return [
        ("baseline", dataclasses.replace(cfg, trp_enabled=False, lambda_=0.0)),
        ("trp", dataclasses.replace(cfg, trp_enabled=True, lambda_=0.0)),
        ("trp+nu", dataclasses.replace(cfg, trp_enabled=True, lambda_=nu)),
    ]


def _fmt(x, digits=6):
    return f"{x:.{digits}f}"


def compare_harness(cfg, dataset, energies, keep_models=False):
    """Train each variant once, truncate at every energy, return row dicts.

    Accuracies and drops are in percent / percentage points. With
    ``keep_models`` the trained (unfactorized) models are returned as well.
    """
    spec = model_zoo(cfg.model, dataset.input_shape, dataset.num_classes)
    rows, models = [], {}
    for method, mcfg in method_configs(cfg):
        log.info("training %s", method)
        model, report = train(spec, dataset, mcfg)
        models[method] = model
        before = 100.0 * report.final_test_accuracy
        for e in energies:
            fact = final_prune_and_export(model, mcfg, e)
            after = 100.0 * fact.accuracy(dataset.test_x, dataset.test_y)
            flops = count_flops(spec_of(fact, dataset.num_classes))
            ranks = [layer.rank for layer in fact.layers if hasattr(layer, "rank")]
            rows.append({
                "method": method,
                "energy": e,
                "period": "inf" if not mcfg.trp_enabled else mcfg.m,
                "lambda": mcfg.lambda_,
                "train_energy": mcfg.e if mcfg.trp_enabled else "",
                "top1_before": before,
                "top1_after_truncation": after,
                "drop": before - after,
                "speedup": flops.speedup,
                "ranks": ranks,
            })
    return (rows, models) if keep_models else rows


def format_row(row):
    return [row["method"], repr(float(row["energy"])), str(row["period"]),
            repr(float(row["lambda"])), "" if row["train_energy"] == "" else repr(float(row["train_energy"])),
            _fmt(row["top1_before"], 4), _fmt(row["top1_after_truncation"], 4),
            _fmt(row["drop"], 4), _fmt(row["speedup"]), ";".join(str(r) for r in row["ranks"])]


def write_compare_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for row in rows:
            w.writerow(format_row(row))

