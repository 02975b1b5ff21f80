import csv
import json
import math
import re

from kodairalab.cli import main
from kodairalab.experiments import CSV_COLUMNS

SMALL = "experiment = equidistribution\nmodel = cp1\np_grid = 4, 6, 8, 10\nsamples = 4\nseed = 1\n"


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_writes_csv_and_json(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", write(tmp_path, SMALL), "--out", str(out)]) == 0
    with open(out / "equidistribution.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(math.isfinite(float(r[4])) for r in rows[1:])
    summary = json.loads((out / "equidistribution.json").read_text())
    assert summary["schema_version"] == 1
    assert set(summary["digests"]) == {"config_sha256", "rng", "code_sha256"}
    assert summary["nonfinite_fields"] == []
    assert summary["params"]["seed"] == 1
    assert "equidistribution" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["run", cfg, "--out", str(tmp_path / "a")])
    main(["run", cfg, "--out", str(tmp_path / "b"), "--workers", "2"])
    a = (tmp_path / "a" / "equidistribution.csv").read_bytes()
    b = (tmp_path / "b" / "equidistribution.csv").read_bytes()
    assert a == b


def test_seed_override_lands_in_params(tmp_path):
    main(["run", write(tmp_path, SMALL), "--out", str(tmp_path), "--seed", "9"])
    summary = json.loads((tmp_path / "equidistribution.json").read_text())
    assert summary["params"]["seed"] == 9


def test_config_error_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, SMALL + "colour = red\n")
    assert main(["run", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "unknown key 'colour'" in err and "run.cfg:6" in err


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.cfg")]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_override_exits_2(tmp_path):
    assert main(["run", write(tmp_path, SMALL), "--workers", "0", "--out", str(tmp_path)]) == 2


def test_unsupported_regime_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "experiment = expectation\nmodel = cp1\ndegrees = 0, 1\nk = 1\np = 3\nsamples = 4\n")
    assert main(["run", cfg, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("UnsupportedRegimeError")
    assert "supported" in err
    assert not (tmp_path / "expectation.csv").exists()


def test_verify_single_criterion(capsys):
    assert main(["verify", "fast", "--only", "2"]) == 0
    out = capsys.readouterr().out
    assert re.search(r"^\[PASS\] criterion +2 Gram", out, re.M)
