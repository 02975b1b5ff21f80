"""Flat ``key = value`` experiment configs with strict typing.

Blank lines and lines starting with ``#`` are ignored.  Lists are comma
separated; a matrix is rows separated by ``;`` (``2,1;1,1``).  Unknown keys,
duplicate keys and badly typed values raise :class:`ConfigError`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

EXPERIMENTS = ("tian", "bergman", "equidistribution", "expectation", "covariance",
               "grassmann-check", "degrees", "identities")

# keys that affect how a run executes but not what it computes
RUNTIME_KEYS = ("workers", "out")


class ConfigError(ValueError):
    pass


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _ints(v: str) -> tuple:
    return tuple(int(t) for t in v.split(",") if t.strip())


def _floats(v: str) -> tuple:
    return tuple(float(t) for t in v.split(",") if t.strip())


def _names(v: str) -> tuple:
    return tuple(t.strip() for t in v.split(",") if t.strip())


def _matrix(v: str) -> tuple:
    rows = tuple(tuple(float(t) for t in row.split(",")) for row in v.split(";") if row.strip())
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged matrix")
    return rows


def _choice(*options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: str = "cp1"
    degrees: tuple = (0,)
    twist_amplitudes: tuple = ()
    line_twist: float = 0.0
    matrix: tuple = ()
    p: int = 10
    p_grid: tuple = ()
    k: int = 1
    samples: int = 100
    seed: int = 0
    kind: str = "gaussian"
    battery: tuple = ("one", "re_bump", "radial_bump", "c2_kink")
    points: int = 200
    radial: int = 0
    angles: int = 0
    workers: int = 1
    out: str = "results"

    @property
    def n(self) -> int:
        return 1 if self.model == "cp1" else 2

    def digest(self) -> str:
        """sha256 of the canonical JSON of everything except runtime keys."""
        d = {k: v for k, v in asdict(self).items() if k not in RUNTIME_KEYS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = asdict(self)
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)


PARSERS = {
    "experiment": _choice(*EXPERIMENTS),
    "model": _choice("cp1", "cp2"),
    "degrees": _ints,
    "twist_amplitudes": _floats,
    "line_twist": _float,
    "matrix": _matrix,
    "p": _int,
    "p_grid": _ints,
    "k": _int,
    "samples": _int,
    "seed": _int,
    "kind": _choice("gaussian", "fubini-study"),
    "battery": _names,
    "points": _int,
    "radial": _int,
    "angles": _int,
    "workers": _int,
    "out": str,
}

assert set(PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{where}: key {key!r}: {exc}") from None
    if "experiment" not in values:
        raise ConfigError(f"{source}: missing required key 'experiment'")
    cfg = ExperimentConfig(**values)
    validate(cfg, source)
    return cfg


def validate(cfg: ExperimentConfig, source: str = "<config>") -> None:
    def bad(msg):
        raise ConfigError(f"{source}: {msg}")
    if cfg.p < 1:
        bad("key 'p': must be at least 1")
    if any(p < 1 for p in cfg.p_grid):
        bad("key 'p_grid': entries must be at least 1")
    if cfg.samples < 2:
        bad("key 'samples': need at least 2")
    if cfg.seed < 0:
        bad("key 'seed': must be non-negative")
    if cfg.workers < 1:
        bad("key 'workers': must be at least 1")
    if cfg.twist_amplitudes and len(cfg.twist_amplitudes) != len(cfg.degrees):
        bad("key 'twist_amplitudes': one amplitude per summand degree")
    if cfg.matrix and len(cfg.matrix) != len(cfg.matrix[0]):
        bad("key 'matrix': must be square")


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
