"""Batch benchmark over generated scenes and plot-ready exports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from . import pipeline, stats
from .artsim import DEFAULT_DELTA, JOINT_KINDS, NoiseSpec, corrupt, generate_scene, ground_truth_field, random_spec
from .errors import ArtdirError, EmptyTable
from .geom import angle_between

log = logging.getLogger(__name__)

METHODS = ("pipeline", "normal_only", "flow_argmax")
RAW_HEADER = ["scene", "kind", "sigma_dir", "sigma_mag", "outlier_fraction", "dropout_fraction", "method", "error", "kappa", "status"]


def default_noise_grid() -> tuple:
    return tuple(NoiseSpec(s, 0.0, r) for r, s in product((0.0, 0.1), (0.0, 0.05, 0.1, 0.2, 0.4)))


@dataclass(frozen=True)
class BenchmarkConfig:
    scene_count: int = 20
    joint_kinds: tuple = JOINT_KINDS
    noise_grid: tuple = field(default_factory=default_noise_grid)
    methods: tuple = METHODS
    master_seed: int = 0
    out_dir: str | None = None
    estimator: pipeline.EstimatorConfig = field(default_factory=pipeline.EstimatorConfig)
    delta: float = DEFAULT_DELTA
    grasp_point: str = "holdable"  # or "movable" (centroid of the moving part)
    density: float = 1e4
    jobs: int = 1

    def __post_init__(self):
        if self.scene_count < 1:
            raise ValueError("scene_count must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods: {sorted(bad)}")
        bad = set(self.joint_kinds) - set(JOINT_KINDS)
        if bad or not self.joint_kinds:
            raise ValueError(f"bad joint kinds: {sorted(bad)}")
        if self.grasp_point not in ("holdable", "movable"):
            raise ValueError("grasp_point must be 'holdable' or 'movable'")

    @classmethod
    def from_dict(cls, d: dict) -> BenchmarkConfig:
        kw = dict(d)
        if "noise_grid" in kw:
            kw["noise_grid"] = _parse_grid(kw["noise_grid"])
        if "estimator" in kw:
            kw["estimator"] = pipeline.EstimatorConfig.from_dict(kw["estimator"])
        for k in ("joint_kinds", "methods"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**{k: v for k, v in kw.items() if k in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {
            "scene_count": self.scene_count,
            "joint_kinds": list(self.joint_kinds),
            "noise_grid": [n.to_dict() for n in self.noise_grid],
            "methods": list(self.methods),
            "master_seed": self.master_seed,
            "estimator": {k: getattr(self.estimator, k) for k in ("subset_count", "subset_size", "min_valid_points")},
            "delta": self.delta,
            "grasp_point": self.grasp_point,
            "density": self.density,
        }


def _parse_grid(g) -> tuple:
    """Either a list of NoiseSpec dicts or a dict of per-field value lists (crossed)."""
    if isinstance(g, dict):
        keys = ["sigma_dir", "sigma_mag", "outlier_fraction", "dropout_fraction"]
        vals = [g.get(k, [0.0]) for k in keys]
        vals = [v if isinstance(v, (list, tuple)) else [v] for v in vals]
        return tuple(NoiseSpec(*combo) for combo in product(*vals))
    return tuple(NoiseSpec(**n) for n in g)


def noise_label(n: NoiseSpec) -> str:
    return f"sd={n.sigma_dir:g},sm={n.sigma_mag:g},rho={n.outlier_fraction:g},drop={n.dropout_fraction:g}"


@dataclass
class ErrorTable:
    rows: list
    methods: tuple

    def errors(self, method: str, noise: NoiseSpec | None = None) -> np.ndarray:
        return np.array([r["error"] for r in self._select(method, noise) if r["status"] == "ok"], dtype=float)

    def _select(self, method, noise):
        out = [r for r in self.rows if r["method"] == method]
        if noise is not None:
            key = noise.to_dict()
            out = [r for r in out if all(r[k] == v for k, v in key.items())]
        return out

    def noise_levels(self) -> list:
        seen = {}
        for r in self.rows:
            n = NoiseSpec(r["sigma_dir"], r["sigma_mag"], r["outlier_fraction"], r["dropout_fraction"])
            seen.setdefault(noise_label(n), n)
        return list(seen.values())

    def failures(self) -> int:
        return sum(r["status"] != "ok" for r in self.rows)

    def paired(self, method_a: str, method_b: str, noise: NoiseSpec):
        """Errors of two methods on the scenes where both succeeded."""
        a = {r["scene"]: r["error"] for r in self._select(method_a, noise) if r["status"] == "ok"}
        b = {r["scene"]: r["error"] for r in self._select(method_b, noise) if r["status"] == "ok"}
        keys = sorted(set(a) & set(b))
        return np.array([a[k] for k in keys]), np.array([b[k] for k in keys])

    def summary(self) -> dict:
        out = {"methods": {}, "failures": {}, "tests": {}}
        for m in self.methods:
            per = {}
            for n in self.noise_levels():
                e = self.errors(m, n)
                if e.size:
                    per[noise_label(n)] = stats.summarize(e)
            out["methods"][m] = per
            out["failures"][m] = sum(r["status"] != "ok" for r in self.rows if r["method"] == m)
        if "pipeline" in self.methods:
            for m in self.methods:
                if m == "pipeline":
                    continue
                for n in self.noise_levels():
                    a, b = self.paired("pipeline", m, n)
                    if a.size >= 2:
                        out["tests"].setdefault(m, {})[noise_label(n)] = {"n": int(a.size), "p_value": stats.paired_t_test_one_sided(a, b)}
        return out

    def raw_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in RAW_HEADER])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_raw_csv(path) -> ErrorTable:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            row = dict(r)
            row["scene"] = int(row["scene"])
            for k in ("sigma_dir", "sigma_mag", "outlier_fraction", "dropout_fraction", "error", "kappa"):
                row[k] = float(row[k])
            rows.append(row)
    methods = tuple(dict.fromkeys(r["method"] for r in rows))
    return ErrorTable(rows, methods)


def scene_seed(master_seed: int, index: int) -> int:
    child = np.random.SeedSequence(master_seed).spawn(index + 1)[index]
    return int(child.generate_state(1, dtype=np.uint64)[0])


def _run_scene(cfg: BenchmarkConfig, index: int) -> list:
    seed = scene_seed(cfg.master_seed, index)
    kind = cfg.joint_kinds[index % len(cfg.joint_kinds)]
    rows = []
    base = {"scene": index, "kind": kind}
    try:
        rng = np.random.default_rng([seed, 0])
        scene = generate_scene(random_spec(kind, rng, cfg.density), rng)
        if cfg.grasp_point == "holdable":
            g, _ = pipeline.select_grasp_point(scene, 1)
        else:
            g = pipeline.movable_centroid(scene, 1)
        truth = scene.truth_direction(g)
        clean = ground_truth_field(scene, cfg.delta)
    except ArtdirError as exc:
        for n, m in product(cfg.noise_grid, cfg.methods):
            rows.append({**base, **n.to_dict(), "method": m, "error": math.nan, "kappa": math.nan, "status": type(exc).__name__})
        return rows
    est_cfg = replace(cfg.estimator, seed=seed % 2**63)
    for n in cfg.noise_grid:
        # common random numbers across noise levels keep levels paired
        fld = corrupt(clean, n, np.random.default_rng([seed, 1]), scene.movable > 0)
        for m in cfg.methods:
            row = {**base, **n.to_dict(), "method": m, "kappa": math.nan}
            try:
                if m == "pipeline":
                    est = pipeline.estimate_direction(scene, fld, g, est_cfg, part=1)
                    d = est.d_star
                    row["kappa"] = est.vmf.kappa
                elif m == "normal_only":
                    d = pipeline.baseline_normal_only(scene, 1)
                else:
                    d = pipeline.baseline_flow_argmax(scene, fld, g, part=1)
                row["error"] = angle_between(d, truth)
                row["status"] = "ok"
            except ArtdirError as exc:
                row["error"] = math.nan
                row["status"] = type(exc).__name__
            rows.append(row)
    return rows


def run_benchmark(cfg: BenchmarkConfig) -> ErrorTable:
    """Evaluate every method on every (scene, noise level) pair.

    Per-scene failures become rows with ``error = nan`` and the exception
    name as status; the batch never aborts.  When ``cfg.out_dir`` is set the
    raw CSV, summary JSON and plot data are written there.
    """
    idx = range(cfg.scene_count)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            chunks = list(ex.map(_run_scene, [cfg] * cfg.scene_count, idx))
    else:
        chunks = [_run_scene(cfg, i) for i in idx]
    table = ErrorTable([r for c in chunks for r in c], tuple(cfg.methods))
    log.info("benchmark: %d rows, %d failures", len(table.rows), table.failures())
    if cfg.out_dir:
        write_outputs(table, cfg.out_dir, cfg)
    return table


def write_outputs(table: ErrorTable, out_dir, cfg: BenchmarkConfig | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "errors.csv").write_text(table.raw_csv(), encoding="utf-8")
    summary = table.summary()
    if cfg is not None:
        summary["config"] = cfg.to_dict()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    export_plot_data(table, out / "plot")


def export_plot_data(table: ErrorTable, path) -> list:
    """Per-method raw error CSV and summary JSON (quartiles, whiskers, KDE).

    Raises:
        EmptyTable: the table holds no successful rows.
    """
    if not any(r["status"] == "ok" for r in table.rows):
        raise EmptyTable("nothing to export")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for m in table.methods:
        levels = [n for n in table.noise_levels() if table.errors(m, n).size]
        if not levels:
            continue
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scene", "noise", "error"])
        doc = {"method": m, "levels": {}}
        for n in levels:
            label = noise_label(n)
            for r in table._select(m, n):
                if r["status"] == "ok":
                    w.writerow([r["scene"], label, repr(r["error"])])
            e = table.errors(m, n)
            grid, dens = stats.kde(e)
            doc["levels"][label] = {**stats.summarize(e), "kde": {"grid": grid.tolist(), "density": dens.tolist(), "bandwidth": stats.silverman_bandwidth(e)}}
        csv_path = out / f"{m}_errors.csv"
        json_path = out / f"{m}_summary.json"
        csv_path.write_text(buf.getvalue(), encoding="utf-8")
        json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written += [csv_path, json_path]
    return written
