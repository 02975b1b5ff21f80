from pathlib import Path

import pytest

from kodairalab.config import ConfigError, ExperimentConfig, load_config, parse_config

GOOD = """
# small CP1 run
experiment = equidistribution
model = cp1
degrees = 0
p_grid = 4, 8
samples = 5
seed = 7
battery = one, radial_bump
matrix = 2,1;1,1
"""


def test_parse_types():
    cfg = parse_config(GOOD)
    assert cfg.experiment == "equidistribution"
    assert cfg.p_grid == (4, 8)
    assert cfg.samples == 5 and cfg.seed == 7
    assert cfg.battery == ("one", "radial_bump")
    assert cfg.matrix == ((2.0, 1.0), (1.0, 1.0))
    assert cfg.n == 1


def test_defaults_fill_missing_keys():
    cfg = parse_config("experiment = tian")
    assert cfg == ExperimentConfig("tian")


@pytest.mark.parametrize("text,needle", [
    ("experiment = tian\nbogus = 1", "<config>:2: unknown key 'bogus'"),
    ("experiment = tian\np = 3\np = 4", "<config>:3: duplicate key 'p'"),
    ("experiment = tian\np = three", "<config>:2: key 'p'"),
    ("experiment = tian\nmodel = cp3", "<config>:2: key 'model'"),
    ("experiment = tian\njust words", "<config>:2: expected 'key = value'"),
    ("model = cp1", "missing required key 'experiment'"),
    ("experiment = tian\nmatrix = 1,2;3", "<config>:2: key 'matrix'"),
])
def test_errors_name_the_line(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert needle in str(err.value)


@pytest.mark.parametrize("text", [
    "experiment = tian\np = 0",
    "experiment = tian\nsamples = 1",
    "experiment = tian\nseed = -1",
    "experiment = tian\nworkers = 0",
    "experiment = tian\ndegrees = 0, 1\ntwist_amplitudes = 0.1",
    "experiment = tian\nmatrix = 1,2",
])
def test_semantic_validation(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config_reports_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("experiment = tian\nwhat = 1\n")
    with pytest.raises(ConfigError, match=f"{path}:2"):
        load_config(path)
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(tmp_path / "missing.cfg")


def test_digest_ignores_runtime_keys():
    cfg = parse_config(GOOD)
    assert cfg.digest() == cfg.with_overrides(workers=4, out="elsewhere").digest()
    assert cfg.digest() != cfg.with_overrides(seed=8).digest()
    assert len(cfg.digest()) == 64


def test_overrides_skip_none():
    cfg = parse_config(GOOD)
    assert cfg.with_overrides(seed=None, workers=None) == cfg


def test_shipped_configs_parse():
    paths = sorted((Path(__file__).parents[1] / "configs").glob("*.cfg"))
    assert paths
    for path in paths:
        load_config(path)
