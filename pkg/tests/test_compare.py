import csv
import json

from trprune.cli import main
from trprune.compare import COMPARE_HEADER, compare_harness, method_configs
from trprune.data import synthetic_blobs
from trprune.trp import TrpConfig


def _cfg(**kw):
    base = dict(model="micro-cnn", epochs=2, batch_size=20, base_lr=0.05, seed=3)
    base.update(kw)
    return TrpConfig(**base)


def test_method_configs_share_schedule():
    cfgs = dict(method_configs(_cfg(lambda_=0.0)))
    assert cfgs["baseline"].trp_enabled is False and cfgs["baseline"].lambda_ == 0
    assert cfgs["trp"].lambda_ == 0 and cfgs["trp+nu"].lambda_ == 3e-4
    for c in cfgs.values():
        assert (c.seed, c.epochs, c.batch_size, c.base_lr) == (3, 2, 20, 0.05)


def test_rows_and_periods():
    rows = compare_harness(_cfg(), synthetic_blobs(1), [0.05, 0.2])
    assert len(rows) == 3 * 2
    assert [r["method"] for r in rows] == ["baseline"] * 2 + ["trp"] * 2 + ["trp+nu"] * 2
    assert all(r["period"] == "inf" for r in rows if r["method"] == "baseline")
    assert all(r["period"] == 20 for r in rows if r["method"] != "baseline")
    for r in rows:
        assert abs(r["drop"] - (r["top1_before"] - r["top1_after_truncation"])) < 1e-12
        assert r["speedup"] > 0 and all(k >= 1 for k in r["ranks"])


def test_cli_compare_byte_identical(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "micro-cnn", "epochs": 2, "batch_size": 20, "seed": 3}))
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert main(["compare", "--config", str(cfg), "--data", "synthetic:1",
                     "--energies", "0.05,0.3", "--out", str(out)]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    with open(outs[0], newline="") as f:
        table = list(csv.reader(f))
    assert table[0] == COMPARE_HEADER and len(table) == 7
    assert {row[2] for row in table[1:] if row[0] == "baseline"} == {"inf"}
