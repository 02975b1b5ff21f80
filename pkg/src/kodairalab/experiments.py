"""Experiment runners, result records and their CSV/JSON serialization.

Each runner maps an :class:`ExperimentConfig` to long-format rows
``(p, phi, statistic, value)`` plus a dict of summary metrics.  Random
draws come from per-task streams (see :mod:`kodairalab.rng`) and results
are assembled in task order, so outputs do not depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import bergman as B
from . import chern as C
from . import geometry as G
from . import grassmann as GR
from . import oracles
from . import zeros as Z
from .config import RUNTIME_KEYS, ConfigError, ExperimentConfig
from .fields import BATTERY, ZERO, toric_bump
from .rng import RNG_ID, stream
from .sections import BundleSpec, build_space, constant_twist_spec, covariance_experiment, h0_dimension

SCHEMA_VERSION = 1
CSV_COLUMNS = ("experiment", "p", "phi", "statistic", "value", "config_sha256", "rng")

DEFAULT_GRIDS = {
    ("tian", "cp2"): (5, 8, 12, 17, 25),
    ("tian", "cp1"): (8, 16, 32, 64, 128),
    ("bergman", "cp1"): (8, 16, 32, 64, 128),
    ("bergman", "cp2"): (5, 8, 12, 17, 25),
    ("equidistribution", "cp1"): (8, 16, 32, 64, 128, 256),
    ("equidistribution", "cp2"): (2, 3, 4, 6, 8, 12),
}


@dataclass
class ResultRecord:
    experiment: str
    params: dict
    rows: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    digests: dict = field(default_factory=dict)

    def add(self, p, phi, statistic, value):
        self.rows.append((p, phi, statistic, value))


def code_digest() -> str:
    """sha256 over the package sources, in file name order."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# config → model


def bundle_spec(cfg: ExperimentConfig, p: int | None = None) -> BundleSpec:
    """BundleSpec from the ``degrees``, ``twist_amplitudes``, ``line_twist`` and ``matrix`` keys."""
    n, p = cfg.n, cfg.p if p is None else p
    try:
        if cfg.matrix:
            if cfg.twist_amplitudes or any(cfg.degrees) and len(cfg.degrees) > 1:
                raise ConfigError("key 'matrix': combine only with trivial summands and no twists")
            return constant_twist_spec(n, p, np.array(cfg.matrix, float))
        twists = tuple(toric_bump(n, a) for a in cfg.twist_amplitudes)
        line = toric_bump(n, cfg.line_twist) if cfg.line_twist else ZERO
        return BundleSpec(n, p, cfg.degrees, twists=twists, line_twist=line,
                          allow_rank_exceeds_dim=len(cfg.degrees) > n)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bundle: {exc}") from None


def p_grid(cfg: ExperimentConfig) -> tuple:
    if cfg.p_grid:
        return cfg.p_grid
    return DEFAULT_GRIDS.get((cfg.experiment, cfg.model), (cfg.p,))


def battery(cfg: ExperimentConfig) -> tuple:
    by_name = {phi.name: phi for phi in BATTERY}
    unknown = [b for b in cfg.battery if b not in by_name]
    if unknown:
        raise ConfigError(f"key 'battery': unknown test functions {', '.join(unknown)}")
    return tuple(by_name[b] for b in cfg.battery)


def test_points(cfg: ExperimentConfig) -> G.ChartPoint:
    """``points`` FS-random points plus the center, from a dedicated stream."""
    return G.sample_points(stream(cfg.seed, cfg.experiment, 0), cfg.n, cfg.points)


def quadrature(cfg: ExperimentConfig):
    if cfg.radial or cfg.angles:
        return G.make_rule(cfg.n, cfg.radial or None, cfg.angles or None)
    return None


@contextmanager
def task_mapper(workers: int):
    """Builtin map for one worker, else an order-preserving process pool map."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, items: pool.map(fn, items, chunksize=1)


# ---------------------------------------------------------------------------
# runners


def run_tian(cfg, rec, mapper):
    spec = bundle_spec(cfg)
    grid = p_grid(cfg)
    rep = B.tian_residual(cfg.k, spec, grid, test_points(cfg), quadrature(cfg), mapper=mapper)
    for j, p in enumerate(grid):
        rec.add(p, "", "residual1", rep.residual1[j])
        if rep.residual2 is not None:
            rec.add(p, "", "residual2", rep.residual2[j])
        rec.add(p, "", "bound_residual", rep.bound_residual[j])
    rec.metrics.update(k=cfg.k, prequantum=spec.prequantum, slope1=rep.slope1,
                       slope2=rep.slope2, bound_slope=rep.bound_slope)
    for name in ("slope1", "slope2", "bound_slope"):
        if rec.metrics[name] is not None:
            rec.add("all", "", name, rec.metrics[name])


def _bergman_task(p, spec, x, rule):
    sp = build_space(spec.with_p(p), rule)
    rep = B.bergman_expansion_check(spec, [p], x, rule)
    out = {"residual": rep["residual"][0], "dim": sp.dim, "trace_integral": B.trace_integral(sp)}
    if spec.n == 1 and not spec.twists and spec.line_twist.is_zero and spec.matrix is None and spec.rank == 1:
        tr = np.real(np.trace(B.bergman_diagonal(sp, x).P.value, axis1=1, axis2=2))
        out["relative_spread"] = float((tr.max() - tr.min()) / tr.mean())
    return out


def run_bergman(cfg, rec, mapper):
    spec = bundle_spec(cfg)
    grid = p_grid(cfg)
    x = test_points(cfg).best_chart()
    vals = list(mapper(partial(_bergman_task, spec=spec, x=x, rule=quadrature(cfg)), list(grid)))
    worst = 0.0
    for p, v in zip(grid, vals):
        for key, val in v.items():
            rec.add(p, "", key, val)
        worst = max(worst, abs(v["trace_integral"] - v["dim"]) / v["dim"])
    rec.metrics["trace_integral_max_relative_error"] = worst
    if len(grid) >= 4:
        rec.metrics["residual_slope"] = B.fit_slope(grid, [v["residual"] for v in vals])
        rec.add("all", "", "residual_slope", rec.metrics["residual_slope"])
    if "relative_spread" in vals[0]:
        rec.metrics["max_relative_spread"] = max(v["relative_spread"] for v in vals)


def run_equidistribution(cfg, rec, mapper):
    spec = bundle_spec(cfg)
    grid = p_grid(cfg)
    bat = battery(cfg)
    rep = Z.equidistribution_experiment(spec, grid, bat, cfg.seed, cfg.samples,
                                        experiment=cfg.experiment, mapper=mapper)
    for j, p in enumerate(grid):
        for phi in bat:
            for stat in ("single", "mean", "fitted_C", "tail_fraction"):
                rec.add(p, phi.name, stat, rep[stat][phi.name][j])
        rec.add(p, "", "redraws", rep["redraws"][j])
    rec.metrics.update(counts_exact=rep["counts_exact"], max_root_residual=rep["max_root_residual"],
                       redraws=sum(rep["redraws"]), reference=rep["reference"])


def _degree_task(index, spec, seed, experiment, kind):
    count, want, worst = Z.degeneracy_degree(Z.cached_space(spec), stream(seed, experiment, spec.p, index), kind)
    return count, want, worst


def run_degeneracy_degree(cfg, rec, mapper):
    """CP², r = 2, k = 2: D_2 is a curve, so count its intersections with random lines."""
    spec = bundle_spec(cfg)
    task = partial(_degree_task, spec=spec, seed=cfg.seed, experiment=cfg.experiment, kind=cfg.kind)
    out = list(mapper(task, range(cfg.samples)))
    counts = [c for c, _, _ in out]
    want = out[0][1]
    for i, (c, _, w) in enumerate(out):
        rec.add(cfg.p, f"sample{i}", "line_intersections", c)
        rec.add(cfg.p, f"sample{i}", "max_residual", w)
    rec.metrics.update(kind=cfg.kind, regime="b2", predicted_degree=want,
                       mismatches=sum(c != want for c in counts), max_residual=max(w for _, _, w in out))


def run_expectation(cfg, rec, mapper):
    spec = bundle_spec(cfg)
    if Z._regime(spec, cfg.k) == "b2":
        return run_degeneracy_degree(cfg, rec, mapper)
    bat = battery(cfg)
    ests = Z.expectation_experiment(spec, cfg.k, cfg.samples, bat, cfg.seed, cfg.kind,
                                    experiment=cfg.experiment, mapper=mapper)
    zs = {}
    for e in ests:
        rec.add(cfg.p, e.phi, "mean", e.mean)
        rec.add(cfg.p, e.phi, "stderr", e.stderr)
        rec.add(cfg.p, e.phi, "prediction", e.prediction)
        zs[e.phi] = e.z_score()
        rec.add(cfg.p, e.phi, "z", zs[e.phi])
        if e.two_term is not None:
            rec.add(cfg.p, e.phi, "two_term", e.two_term)
            rec.add(cfg.p, e.phi, "z_two_term", e.z_score(e.two_term))
    rec.metrics.update(kind=cfg.kind, regime=Z._regime(spec, cfg.k), max_z=max(zs.values()),
                       redraws=ests[0].redraws if ests else 0)


def run_covariance(cfg, rec, mapper):
    if not cfg.matrix:
        raise ConfigError("key 'matrix': required for the covariance experiment")
    spec = bundle_spec(cfg)
    space = build_space(spec)
    scalar = build_space(BundleSpec(cfg.n, cfg.p))
    rep = covariance_experiment(space, scalar, cfg.samples, stream(cfg.seed, cfg.experiment, cfg.p))
    r = spec.rank
    worst = 0.0
    for j in range(r):
        for l in range(r):
            est, sig, tgt = rep["estimate"][j, l], rep["sigma"][j, l], rep["target"][j, l]
            rec.add(cfg.p, f"{j}{l}", "estimate_re", est.real)
            rec.add(cfg.p, f"{j}{l}", "estimate_im", est.imag)
            rec.add(cfg.p, f"{j}{l}", "sigma", sig)
            rec.add(cfg.p, f"{j}{l}", "target", tgt.real)
            worst = max(worst, abs(est - tgt) / sig)
    for j in range(r):
        for key in ("marginal_ratio", "marginal_sigma", "coordinate_z", "shape_z"):
            rec.add(cfg.p, f"{j}", key, rep[key][j])
    rec.metrics.update(max_sigma_deviation=worst,
                       max_coordinate_z=float(np.max(rep["coordinate_z"])),
                       max_shape_z=float(np.max(rep["shape_z"])),
                       estimate=[[[v.real, v.imag] for v in row] for row in rep["estimate"]])


GRASS_CASES = ((1, 3), (2, 4), (2, 5), (3, 6))


def run_grassmann(cfg, rec, mapper):
    rng = stream(cfg.seed, cfg.experiment, 0)
    worst_center = worst_transpose = 0.0
    for r, m in GRASS_CASES:
        label = f"G({r},{m})"
        c = GR.GrassChartPoint.center(r, m)
        got = C.raw_curvature(GR.dual_universal_metric(c))[0]
        dc = float(np.max(np.abs(got - GR.center_curvature_dual(r, m))))
        x = GR.GrassChartPoint.random(rng, r, m, size=cfg.points)
        dt = GR.dual_transpose_defect(x)
        ev = float(np.min(GR.c1_min_eigenvalue(x)))
        rec.add("", label, "center_defect", dc)
        rec.add("", label, "transpose_defect", dt)
        rec.add("", label, "c1_min_eigenvalue", ev)
        worst_center, worst_transpose = max(worst_center, dc), max(worst_transpose, dt)
    line = {}
    for m in (2, 3, 4):
        line[m] = GR.line_integral_c1(m)
        rec.add("", f"G(1,{m})", "line_integral_c1", line[m])
    rec.metrics.update(center_defect=worst_center, transpose_defect=worst_transpose,
                       line_integral_error=max(abs(v - 1) for v in line.values()))


def run_degrees(cfg, rec, mapper):
    spec = bundle_spec(cfg)
    n, r = spec.n, spec.rank
    # E itself: the frame metric of E does not involve p
    h0 = h0_dimension(n, spec.degrees)
    big_n = h0 - 1
    rule = quadrature(cfg) or G.make_rule(n)
    if spec.is_toric:
        rule = rule.torus_reduced()
    lam = {}
    for k in range(big_n - r, big_n + 1):
        j = k - big_n + r
        if j > n:
            continue
        lam[k] = C.intermediate_degree(k, spec.e_frame, r, h0, rule)
        rec.add("", f"c{j}", f"lambda_{k}", lam[k])
    rec.metrics.update(h0=h0, lambdas={str(k): v for k, v in lam.items()})


def run_identities(cfg, rec, mapper):
    rng = stream(cfg.seed, cfg.experiment, 0)
    # random expression jets against Richardson finite differences
    worst_fd = 0.0
    count = max(cfg.samples, 2)
    for i in range(count):
        expr = oracles.random_expression(rng, 2)
        z = (rng.standard_normal(2) + 1j * rng.standard_normal(2)) * 0.5
        worst_fd = max(worst_fd, oracles.jet_fd_discrepancy(expr, z))
    rec.add("", "", "jet_fd_relative_error", worst_fd)
    # tensor Chern identity for r ≤ 2, p ≤ 10
    x = G.sample_points(rng, cfg.n, cfg.points).best_chart()
    worst_tensor = 0.0
    specs = [BundleSpec(cfg.n, 1, (1,), twists=(toric_bump(cfg.n, 0.4),)),
             BundleSpec(cfg.n, 1, (1, 2), twists=(toric_bump(cfg.n, 0.4), toric_bump(cfg.n, -0.3)),
                        allow_rank_exceeds_dim=True)]
    for spec in specs:
        for p in range(1, 11):
            for k in range(1, spec.rank + 1):
                res = C.tensor_chern_identity_residual(p, k, spec.line_weight(x), spec.e_frame(x))
                rec.add(p, f"r{spec.rank}", f"tensor_identity_k{k}", res)
                worst_tensor = max(worst_tensor, res)
    # curvature transfer on CP² at p = cfg.p
    tspec = BundleSpec(2, cfg.p, (1, 2), twists=(toric_bump(2, 0.4), toric_bump(2, -0.3)))
    xt = G.sample_points(rng, 2, 50).best_chart()
    transfer = B.curvature_transfer_residual(build_space(tspec), xt)
    rec.add(cfg.p, "", "curvature_transfer", transfer)
    rec.metrics.update(jet_fd_relative_error=worst_fd, tensor_identity=worst_tensor,
                       curvature_transfer=transfer)


RUNNERS = {
    "tian": run_tian,
    "bergman": run_bergman,
    "equidistribution": run_equidistribution,
    "expectation": run_expectation,
    "covariance": run_covariance,
    "grassmann-check": run_grassmann,
    "degrees": run_degrees,
    "identities": run_identities,
}


# ---------------------------------------------------------------------------
# serialization


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(rec: ResultRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p, phi, stat, value in rec.rows:
        w.writerow((rec.experiment, _fmt(p), phi, stat, _fmt(value),
                    rec.digests["config_sha256"], rec.digests["rng"]))
    return buf.getvalue()


def _clean(obj, path, bad):
    """JSON-ready copy; non-finite floats become null and are listed in ``bad``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v, f"{path}.{k}", bad) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, f"{path}[{i}]", bad) for i, v in enumerate(obj)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist(), path, bad)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            bad.append(path)
            return None
        return float(obj)
    return obj


def json_summary(rec: ResultRecord) -> dict:
    bad: list = []
    out = {"schema_version": SCHEMA_VERSION, "experiment": rec.experiment,
           "params": _clean(rec.params, "params", bad), "metrics": _clean(rec.metrics, "metrics", bad),
           "digests": rec.digests, "wall_time_s": round(rec.wall_time, 3)}
    out["nonfinite_fields"] = bad
    return out


def write_outputs(rec: ResultRecord, out: str | Path) -> tuple[Path, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{rec.experiment}.csv"
    json_path = out / f"{rec.experiment}.json"
    csv_path.write_text(csv_text(rec), encoding="utf-8", newline="")
    json_path.write_text(json.dumps(json_summary(rec), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def execute(cfg: ExperimentConfig) -> ResultRecord:
    """Run the configured experiment without writing files."""
    params = {k: v for k, v in asdict(cfg).items() if k not in RUNTIME_KEYS}
    rec = ResultRecord(cfg.experiment, params,
                       digests={"config_sha256": cfg.digest(), "rng": RNG_ID, "code_sha256": code_digest()})
    t0 = time.perf_counter()
    with task_mapper(cfg.workers) as mapper:
        RUNNERS[cfg.experiment](cfg, rec, mapper)
    rec.wall_time = time.perf_counter() - t0
    return rec


def run(cfg: ExperimentConfig) -> tuple[ResultRecord, Path, Path]:
    """Run the experiment and write ``<out>/<experiment>.csv`` and ``.json``."""
    rec = execute(cfg)
    csv_path, json_path = write_outputs(rec, cfg.out)
    return rec, csv_path, json_path
