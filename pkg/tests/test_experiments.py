import csv
import io
import json
import math

import pytest

from kodairalab import experiments as X
from kodairalab.config import ConfigError, parse_config

SMALL = "experiment = equidistribution\nmodel = cp1\np_grid = 4, 6, 8, 10\nsamples = 4\nseed = 3\n"


def test_csv_is_identical_across_worker_counts():
    cfg = parse_config(SMALL)
    one = X.csv_text(X.execute(cfg))
    two = X.csv_text(X.execute(cfg.with_overrides(workers=2)))
    assert one == two
    assert one.splitlines()[0] == ",".join(X.CSV_COLUMNS)


def test_seed_changes_output():
    cfg = parse_config(SMALL)
    assert X.csv_text(X.execute(cfg)) != X.csv_text(X.execute(cfg.with_overrides(seed=4)))


def test_csv_rows_carry_digest_and_rng():
    cfg = parse_config(SMALL)
    rec = X.execute(cfg)
    rows = list(csv.reader(io.StringIO(X.csv_text(rec))))[1:]
    assert rows
    for fields in rows:
        assert len(fields) == len(X.CSV_COLUMNS)
        assert fields[0] == "equidistribution"
        assert fields[-2] == cfg.digest()
        assert fields[-1] == rec.digests["rng"]


def test_json_marks_nonfinite_values():
    rec = X.ResultRecord("tian", {"p": 3}, metrics={"slope": math.nan, "ok": 1.5, "list": [1.0, math.inf]},
                         digests={"config_sha256": "x", "rng": "y"})
    out = X.json_summary(rec)
    assert out["metrics"]["slope"] is None
    assert out["metrics"]["list"] == [1.0, None]
    assert sorted(out["nonfinite_fields"]) == ["metrics.list[1]", "metrics.slope"]
    json.dumps(out, allow_nan=False)


def test_float_format_round_trips():
    v = 0.1 + 0.2
    assert float(X._fmt(v)) == v
    assert X._fmt(True) == "true"


def test_unknown_battery_entry():
    cfg = parse_config(SMALL + "battery = one, nope\n")
    with pytest.raises(ConfigError, match="nope"):
        X.battery(cfg)


def test_default_grid_and_explicit_grid():
    assert X.p_grid(parse_config("experiment = tian\nmodel = cp2")) == (5, 8, 12, 17, 25)
    assert X.p_grid(parse_config("experiment = tian\np_grid = 3,4")) == (3, 4)
    assert X.p_grid(parse_config("experiment = covariance\np = 9")) == (9,)


def test_bundle_spec_from_config():
    spec = X.bundle_spec(parse_config("experiment = tian\nmodel = cp2\ndegrees = 1, 2\ntwist_amplitudes = 0.4, -0.3"))
    assert spec.rank == 2 and spec.n == 2
    assert spec.prequantum
    line = X.bundle_spec(parse_config("experiment = tian\nmodel = cp2\ndegrees = 1, 2\nline_twist = 0.2"))
    assert not line.prequantum


def test_code_digest_is_stable():
    assert X.code_digest() == X.code_digest()


def test_cp2_rank_two_k2_reports_curve_degree():
    cfg = parse_config("experiment = expectation\nmodel = cp2\ndegrees = 0, 1\nk = 2\np = 3\nsamples = 4\n")
    rec = X.execute(cfg)
    # deg D_2 = c₁(O(3)⊕O(4)) = 7
    assert rec.metrics["predicted_degree"] == 7
    assert rec.metrics["mismatches"] == 0
    assert rec.metrics["max_residual"] < 1e-6
