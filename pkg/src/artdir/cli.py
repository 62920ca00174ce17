"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 degenerate-math error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import artsim, bench, depthfit, pipeline, stats, tacsim
from .errors import DataError, DegenerateError
from .geom import axis_angle, normalize

log = logging.getLogger("artdir")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _emit(doc: dict, out: str | None, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text, encoding="utf-8")
    log.info("wrote %s", d / name)


def _methods(arg: str | None, default) -> tuple:
    if not arg:
        return tuple(default)
    names = tuple(m.strip() for m in arg.split(",") if m.strip())
    bad = [m for m in names if m not in bench.METHODS]
    if bad:
        raise UsageError(f"unknown method(s): {', '.join(bad)}; choose from {', '.join(bench.METHODS)}")
    return names


def _vec(text: str) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad vector {text!r}") from exc
    if v.shape != (3,):
        raise UsageError(f"expected three comma-separated numbers, got {text!r}")
    return v


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    cfg = _load_json(args.config)
    count = args.count if args.count is not None else int(cfg.get("count", 1))
    kinds = args.kind.split(",") if args.kind else cfg.get("joint_kinds", list(artsim.JOINT_KINDS))
    noise = artsim.NoiseSpec(**cfg.get("noise", {}))
    if args.sigma_dir is not None or args.outlier_fraction is not None:
        noise = replace(
            noise,
            sigma_dir=noise.sigma_dir if args.sigma_dir is None else args.sigma_dir,
            outlier_fraction=noise.outlier_fraction if args.outlier_fraction is None else args.outlier_fraction,
        )
    delta = float(cfg.get("delta", artsim.DEFAULT_DELTA))
    density = float(cfg.get("density", 1e4))
    master = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        seed = bench.scene_seed(master, i)
        kind = kinds[i % len(kinds)]
        if kind not in artsim.JOINT_KINDS:
            raise UsageError(f"unknown joint kind {kind!r}")
        rng = np.random.default_rng([seed, 0])
        scene = artsim.generate_scene(artsim.random_spec(kind, rng, density), rng)
        fld = artsim.corrupt(artsim.ground_truth_field(scene, delta), noise, np.random.default_rng([seed, 1]), scene.movable > 0)
        stem = out / f"scene_{i:04d}"
        artsim.write_scene_csv(scene, f"{stem}.csv")
        artsim.write_field_csv(fld, f"{stem}_field.csv")
        artsim.write_metadata(f"{stem}.json", scene.joint_truth, delta, None, seed, noise=noise.to_dict(), kind=kind)
    log.info("generated %d scenes in %s", count, out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = pipeline.EstimatorConfig.from_dict(_load_json(args.config))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    meta = artsim.read_metadata(args.meta) if args.meta else {}
    delta = float(meta.get("delta") or artsim.DEFAULT_DELTA)
    scene = artsim.read_scene_csv(args.scene, meta.get("joint_truth"))
    fld = artsim.read_field_csv(args.field, delta)
    if len(fld) != len(scene):
        raise DataError(f"field has {len(fld)} rows, scene has {len(scene)}")
    fallback = False
    if args.grasp:
        g = _vec(args.grasp)
    else:
        g, fallback = pipeline.select_grasp_point(scene, args.part)
    methods = _methods(args.method, ("pipeline",))
    doc = {"grasp_point": g.tolist(), "grasp_fallback": fallback, "methods": {}}
    truth = None
    if scene.joint_truth is not None and np.linalg.norm(scene.joint_truth.velocity(g)) > 0:
        truth = scene.truth_direction(g)
    for m in methods:
        if m == "pipeline":
            est = pipeline.estimate_direction(scene, fld, g, cfg, part=args.part)
            res = est.to_dict()
            d = est.d_star
        elif m == "normal_only":
            d = pipeline.baseline_normal_only(scene, args.part)
            res = {"d_star": d.tolist()}
        else:
            d = pipeline.baseline_flow_argmax(scene, fld, g, part=args.part)
            res = {"d_star": d.tolist()}
        if truth is not None:
            res["error"] = float(math.acos(float(np.clip(d @ truth, -1.0, 1.0))))
        doc["methods"][m] = res
    if truth is not None:
        doc["truth"] = truth.tolist()
    _emit(doc, args.out, "estimate.json")
    return EXIT_OK


def cmd_bench(args) -> int:
    raw = _load_json(args.config)
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    if args.method:
        raw["methods"] = list(_methods(args.method, bench.METHODS))
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    raw.setdefault("out_dir", "bench_out")
    try:
        cfg = bench.BenchmarkConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad benchmark config: {exc}") from exc
    table = bench.run_benchmark(cfg)
    print(f"{len(table.rows)} rows, {table.failures()} failures -> {cfg.out_dir}")
    return EXIT_OK


def _read_errors(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty")
    col = 0
    try:
        float(rows[0][0])
    except ValueError:
        header = [h.strip() for h in rows[0]]
        col = header.index("error") if "error" in header else 0
        rows = rows[1:]
    try:
        return np.array([float(r[col]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: non-numeric error column") from exc


def cmd_stats(args) -> int:
    a = _read_errors(args.a)
    b = _read_errors(args.b)
    keep = np.isfinite(a) & np.isfinite(b) if a.shape == b.shape else slice(None)
    t, df = stats.paired_t_statistic(a[keep], b[keep])
    doc = {
        "n": int(np.size(a[keep])),
        "dropped_nonfinite": int(a.size - np.size(a[keep])),
        "t": t if math.isfinite(t) else str(t),
        "df": df,
        "p_value": stats.paired_t_test_one_sided(a[keep], b[keep]),
        "alternative": "mean(a - b) < 0",
        "a": stats.summarize(a),
        "b": stats.summarize(b),
    }
    _emit(doc, args.out, "stats.json")
    return EXIT_OK


def cmd_tacsim(args) -> int:
    cfg = _load_json(args.config)
    kind = cfg.get("world", "door")
    world_kw = {k: cfg[k] for k in ("stiffness", "slip_threshold") if k in cfg}
    if kind == "door":
        w = tacsim.door_world(float(cfg.get("radius", 0.35)), **world_kw)
    elif kind == "drawer":
        w = tacsim.drawer_world(**world_kw)
    else:
        raise UsageError(f"unknown world {kind!r} (door or drawer)")
    g = w.handle_pose.translation
    if "direction" in cfg:
        d = normalize(np.asarray(cfg["direction"], dtype=float))
    else:
        # perturb the true tangent by a fixed angle about a seeded axis
        true_d = w.joint.tangent(g)
        err = math.radians(float(cfg.get("direction_error_deg", 0.0)))
        rng = np.random.default_rng(args.seed if args.seed is not None else int(cfg.get("seed", 0)))
        perp = normalize(np.cross(true_d, rng.normal(size=3)))
        d = axis_angle(perp, err) @ true_d
    ctl = dict(cfg.get("controller", {}))
    if args.no_correction:
        ctl["correction"] = False
    try:
        ctl_cfg = tacsim.ControllerConfig(**ctl)
    except TypeError as exc:
        raise UsageError(f"bad controller config: {exc}") from exc
    rep = tacsim.regulate(w, d, ctl_cfg)
    doc = {"direction": d.tolist(), **rep.to_dict()}
    _emit(doc, args.out, "rollout.json")
    return EXIT_OK


def cmd_depth(args) -> int:
    sensor = depthfit.read_depth(args.sensor, args.intrinsics)
    est = depthfit.read_pgm16(args.estimate).astype(float)
    if est.shape != sensor.values.shape:
        raise DataError(f"image sizes differ: {est.shape} vs {sensor.values.shape}")
    ok = (sensor.values > 0) & (est > 0)
    try:
        cfg = depthfit.RansacConfig(**_load_json(args.config))
    except TypeError as exc:
        raise UsageError(f"bad RANSAC config: {exc}") from exc
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    model = depthfit.ransac_scale(est[ok], sensor.values[ok], cfg, rng)
    depth, defined = model.refine(est)
    depth[~(defined & (est > 0))] = 0.0
    refined = depthfit.DepthImage(depth, sensor.fx, sensor.fy, sensor.cx, sensor.cy)
    normals, valid = depthfit.normals_from_depth(refined)
    doc = {**model.to_dict(), "n_samples": int(ok.sum()), "n_normals": int(valid.sum())}
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    depthfit.write_depth(refined, out / "refined.pgm")
    np.savez(out / "normals.npz", normals=normals, valid=valid)
    _emit(doc, str(out), "scale_model.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artdir", description="Interaction-direction inference for articulated objects.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output directory (default: stdout for JSON reports)"):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, help="seed (unsigned 64-bit)")
        sp.add_argument("--out", help=out_help)

    s = sub.add_parser("gen", help="generate scenes and displacement fields")
    common(s, "output directory (default: .)")
    s.add_argument("--count", type=int)
    s.add_argument("--kind", help="comma-separated joint kinds to cycle through")
    s.add_argument("--sigma-dir", type=float)
    s.add_argument("--outlier-fraction", type=float)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("estimate", help="infer the direction for one scene")
    common(s)
    s.add_argument("scene")
    s.add_argument("field")
    s.add_argument("--meta", help="metadata JSON (joint truth, delta)")
    s.add_argument("--grasp", help="grasp point x,y,z (default: holdable centroid)")
    s.add_argument("--part", type=int, default=1)
    s.add_argument("--method", help="comma-separated: pipeline,normal_only,flow_argmax")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("bench", help="run the synthetic benchmark")
    common(s, "output directory (default: bench_out)")
    s.add_argument("--method", help="comma-separated subset of methods")
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("tacsim", help="simulate a contact-regulated rollout")
    common(s)
    s.add_argument("--no-correction", action="store_true")
    s.set_defaults(func=cmd_tacsim)

    s = sub.add_parser("stats", help="one-sided paired t-test on two error CSVs")
    common(s)
    s.add_argument("a", help="errors of the candidate method")
    s.add_argument("b", help="errors of the reference method")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("depth", help="fit depth scale and compute normals")
    common(s, "output directory (default: .)")
    s.add_argument("estimate", help="estimated disparity PGM")
    s.add_argument("sensor", help="sensor depth PGM (millimetres)")
    s.add_argument("--intrinsics", help="intrinsics JSON (default: <sensor>.json)")
    s.set_defaults(func=cmd_depth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"artdir: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateError as exc:
        print(f"artdir: degenerate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"artdir: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
