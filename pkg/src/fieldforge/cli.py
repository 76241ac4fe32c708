"""Command-line driver: reproducible pipelines over the library modules.

Every command reads one JSON run-config plus flags, writes its artifacts
under --out, and prints the primary artifact path on stdout.  Timing and
progress go to stderr so output files and stdout stay byte-reproducible
under a fixed seed.  Exit codes: 0 success, 2 config error, 3 I/O error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import accel, fidelity, flowopt, recon, regalign, svgplot, synthgen
from . import neuralfield as nf
from . import trainer as trainer_mod
from .sampler import DomainBounds, flatten
from .sdfconv import normalize_sdf, occupancy_to_sdf
from .trainer import TrainConfig, TrainingDiverged
from .voxvol import (GridKind, GridMeta, VgridError, WeightParams,
                     read_vgrid, threshold, write_vgrid)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# run configuration

_DEFAULT_CONFIG = {
    "seed": 0,
    "shape": {"type": "sphere", "r_mm": 8.0},
    "morphology": {},
    "grid": {"dims": [32, 32, 32], "voxel_size_mm": [1.0, 1.0, 1.0],
             "origin_mm": [-16.5, -16.5, -16.5]},
    "phis": list(synthgen.DEFAULT_PHIS),
    "phi_range": [45.0, 280.0],
    "train": {},
    "net": {},
    "metrics": {},
    "density_g_per_cm3": 1.25,
}


class RunConfig:
    """Validated view over the JSON run-config document."""

    def __init__(self, doc: dict):
        unknown = set(doc) - set(_DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**_DEFAULT_CONFIG, **doc}
        self.seed = int(merged["seed"])
        try:
            self.shape = synthgen.shape_from_config(merged["shape"])
            self.morphology = synthgen.MorphologyModel(**merged["morphology"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad shape/morphology: {exc}") from exc
        g = merged["grid"]
        try:
            self.grid_meta = GridMeta(
                dims=tuple(int(v) for v in g["dims"]),
                voxel_size=tuple(float(v) for v in g["voxel_size_mm"]),
                kind=GridKind.OCCUPANCY,
                flow_rate_percent=None,
                origin=tuple(float(v) for v in g["origin_mm"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid: {exc}") from exc
        self.phis = [float(p) for p in merged["phis"]]
        if not self.phis:
            raise ConfigError("phis must be non-empty")
        pr = merged["phi_range"]
        if len(pr) != 2 or not pr[1] > pr[0]:
            raise ConfigError("phi_range must be [lo, hi] with hi > lo")
        self.phi_range = (float(pr[0]), float(pr[1]))

        t = dict(merged["train"])
        lam = t.pop("lambda", 0.01)
        try:
            self.train = TrainConfig(lam=float(lam), seed=self.seed, **t)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train config: {exc}") from exc
        try:
            self.net = nf.SirenConfig(**merged["net"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad net config: {exc}") from exc
        m = merged["metrics"]
        try:
            self.ssim = fidelity.SsimParams(
                window_size=int(m.get("ssim_window", 11)),
                sigma=float(m.get("ssim_sigma", 1.5)))
        except ValueError as exc:
            raise ConfigError(f"bad metrics config: {exc}") from exc
        self.weight_params = WeightParams(
            density_g_per_cm3=float(merged["density_g_per_cm3"]))

    @property
    def bounds(self) -> DomainBounds:
        return DomainBounds.from_meta(self.grid_meta, self.phi_range)


def load_config(path: "str | None", seed: "int | None") -> RunConfig:
    if path is None:
        doc = {}
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                f"{exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top-level value must be an object")
    cfg = RunConfig(doc)
    if seed is not None:
        doc = {**doc, "seed": int(seed)}
        cfg = RunConfig(doc)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_threads(args) -> None:
    threads = args.threads
    if threads is None:
        env = os.environ.get("FIELDFORGE_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(
                    f"FIELDFORGE_THREADS must be an integer, got {env!r}") from exc
    if threads is not None:
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        accel.set_num_threads(threads)


def _fmt_phi(phi: float) -> str:
    return f"{phi:g}"


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _out_dir(args)
    manifest = synthgen.generate_dataset(cfg.shape, cfg.morphology,
                                         cfg.grid_meta, cfg.phis, out)
    _log(f"generated {len(manifest['volumes'])} volumes for {manifest['shape']}")
    print(out / "manifest.json")
    return EXIT_OK


def _load_training_volumes(cfg: RunConfig, manifest_path: str, mode: str):
    volumes = synthgen.load_manifest(manifest_path)
    if mode == "sdf":
        converted = []
        for vol in volumes:
            sdf = occupancy_to_sdf(vol)
            converted.append(normalize_sdf(sdf))
        volumes = converted
    return volumes


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    train_cfg = cfg.train
    if args.lam is not None:
        train_cfg = dataclasses.replace(train_cfg, lam=float(args.lam))
    if args.mode is not None and args.mode != train_cfg.mode:
        train_cfg = dataclasses.replace(train_cfg, mode=args.mode)
    net_cfg = cfg.net
    if train_cfg.mode == "sdf" and net_cfg.final_activation != "linear":
        net_cfg = dataclasses.replace(net_cfg, final_activation="linear")
        _log("sdf mode: switching final activation to linear")

    out = _out_dir(args)
    volumes = _load_training_volumes(cfg, args.manifest, train_cfg.mode)
    points = flatten(volumes, cfg.bounds)
    _log(f"training on {len(points)} points, lambda={train_cfg.lam:g}, "
         f"mode={train_cfg.mode}")
    t0 = time.perf_counter()
    net, report = trainer_mod.train(points, train_cfg, net_cfg,
                                    measure_overhead=args.measure_overhead)
    _log(f"trained {report.steps_total} steps in {time.perf_counter()-t0:.1f}s")
    if report.diverged:
        raise TrainingDiverged("training diverged; checkpoint holds last "
                               "stable snapshot")

    ckpt = out / "checkpoint.srnc"
    nf.save_checkpoint(net, ckpt)
    steps_per_epoch = -(-len(points) // train_cfg.batch_size)
    report_doc = {
        "seed": cfg.seed,
        "mode": train_cfg.mode,
        "lambda": train_cfg.lam,
        "steps_total": report.steps_total,
        "steps_per_epoch": steps_per_epoch,
        "final": None if report.final_loss is None else {
            "mse": report.final_loss.mse,
            "gdir": report.final_loss.gdir,
            "total": report.final_loss.total,
        },
        "diverged": report.diverged,
        "checkpoint": ckpt.name,
        "timing": {
            "epoch_seconds": report.epoch_seconds,
            "gdir_overhead_fraction": report.gdir_overhead_fraction,
        },
    }
    (out / "report.json").write_text(
        json.dumps(report_doc, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    with open(out / "loss.csv", "w", encoding="utf-8") as fh:
        fh.write("step,mse,gdir,total\n")
        for i, b in enumerate(report.history):
            fh.write(f"{i},{b.mse!r},{b.gdir!r},{b.total!r}\n")
    print(out / "report.json")
    return EXIT_OK


def _parse_dims(text: "str | None", default) -> "tuple[int, int, int]":
    if text is None:
        return default
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"--dims expects NX,NY,NZ, got {text!r}") from exc
    if len(parts) != 3 or any(p < 2 for p in parts):
        raise ConfigError(f"--dims expects three values >= 2, got {text!r}")
    return parts


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config, args.seed)
    net = nf.load_checkpoint(args.checkpoint)
    dims = _parse_dims(args.dims, cfg.grid_meta.dims)
    out = _out_dir(args)
    raw, occ = recon.reconstruct(net, recon.ReconRequest(
        phi_percent=args.phi, dims=dims, bounds=cfg.bounds, iso=args.iso))
    tag = _fmt_phi(args.phi)
    occ_path = out / f"recon_phi{tag}.vgrid"
    write_vgrid(occ, occ_path)
    if net.config.final_activation == "linear":
        field_path = out / f"field_phi{tag}.vgrid"
        write_vgrid(raw, field_path)
        _log(f"wrote SDF field to {field_path}")
    if args.slice is not None:
        img = recon.slice_z(occ, args.slice)
        pgm_path = out / f"recon_phi{tag}_z{args.slice}.pgm"
        recon.write_pgm(img, pgm_path)
        _log(f"wrote slice to {pgm_path}")
    print(occ_path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.seed)
    vol_a = read_vgrid(args.a)
    vol_b = read_vgrid(args.b)
    report = fidelity.compare(vol_a, vol_b, cfg.ssim)
    out = _out_dir(args)
    path = out / "metrics.json"
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    print(path)
    return EXIT_OK


def cmd_weight_curve(args) -> int:
    cfg = load_config(args.config, args.seed)
    net = nf.load_checkpoint(args.checkpoint)
    dims = _parse_dims(args.dims, None)
    if dims is None:
        scale = max(1, args.scale)
        dims = tuple(max(2, d // scale) for d in cfg.grid_meta.dims)
    phis = np.arange(args.start, args.stop + args.step / 2, args.step)
    out = _out_dir(args)
    t0 = time.perf_counter()
    curve = recon.weight_curve(net, cfg.bounds, dims, phis, cfg.weight_params)
    _log(f"weight curve over {len(curve)} rates in {time.perf_counter()-t0:.1f}s")
    series = [("model", [g for _, g in curve])]
    if args.compare_checkpoint:
        net2 = nf.load_checkpoint(args.compare_checkpoint)
        curve2 = recon.weight_curve(net2, cfg.bounds, dims, phis,
                                    cfg.weight_params)
        series.append(("comparison", [g for _, g in curve2]))
    csv_path = out / "weight_curve.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        header = "phi_percent,grams" + (",grams_comparison" if len(series) > 1
                                        else "")
        fh.write(header + "\n")
        for i, (phi, grams) in enumerate(curve):
            row = f"{_fmt_phi(phi)},{grams!r}"
            if len(series) > 1:
                row += f",{series[1][1][i]!r}"
            fh.write(row + "\n")
    svgplot.line_plot(out / "weight_curve.svg", [p for p, _ in curve], series,
                      title="Digital weight vs flow rate",
                      xlabel="flow rate (%)", ylabel="weight (g)")
    print(csv_path)
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = load_config(args.config, args.seed)
    net = nf.load_checkpoint(args.checkpoint)
    dims = _parse_dims(args.dims, cfg.grid_meta.dims)
    candidates = flowopt.default_candidates(args.phi_min, args.phi_max,
                                            args.phi_step)
    expected = flowopt.expected_layers(cfg.shape, dims, cfg.bounds,
                                       model=cfg.morphology)
    out = _out_dir(args)
    t0 = time.perf_counter()
    schedule, grid = flowopt.optimize_schedule(net, expected, dims, cfg.bounds,
                                               candidates)
    _log(f"optimized {len(schedule.entries)} layers x {len(candidates)} "
         f"candidates in {time.perf_counter()-t0:.1f}s")
    csv_path, m221_path = flowopt.export_schedule(schedule,
                                                  out / "schedule.csv")
    flowopt.export_fitness_grid(grid, out / "fitness_grid.csv")
    svgplot.heatmap(out / "fitness_landscape.svg", grid.values,
                    title="Per-layer fitness landscape",
                    xlabel="candidate flow rate (%)", ylabel="layer",
                    x_extent=(candidates[0], candidates[-1]),
                    y_extent=(0, len(schedule.entries) - 1))
    _log(f"wrote printer commands to {m221_path}")
    print(csv_path)
    return EXIT_OK


def cmd_register(args) -> int:
    source = read_vgrid(args.source)
    target = read_vgrid(args.target)
    seed = args.seed if args.seed is not None else 0
    config = regalign.CpdConfig(outlier_w=args.outlier_w,
                                max_iter=args.max_iter, tol=args.tol,
                                max_points=args.max_points, seed=seed)
    src_pts = regalign.surface_points(source, config.max_points, seed)
    tgt_pts = regalign.surface_points(target, config.max_points, seed + 1)
    result = regalign.cpd_rigid_z(src_pts, tgt_pts, config)
    _log(f"registration {'converged' if result.converged else 'stopped'} "
         f"after {result.iterations} iterations")
    out = _out_dir(args)
    path = out / "transform.json"
    doc = {
        "tx_mm": result.transform.tx_mm,
        "ty_mm": result.transform.ty_mm,
        "theta_z_rad": result.transform.theta_z_rad,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldforge",
        description="Neural flow-rate field pipelines: synthetic data, "
                    "training, reconstruction, evaluation, schedule search "
                    "and registration.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="run-config JSON path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread cap (or FIELDFORGE_THREADS)")

    p = sub.add_parser("generate", help="rasterize the synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the field to a dataset manifest")
    common(p)
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="override the smoothness weight")
    p.add_argument("--mode", choices=["occupancy", "sdf"], default=None,
                   help="override the training target kind")
    p.add_argument("--measure-overhead", action="store_true",
                   help="also time a lambda=0 twin run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="sample a volume at one flow rate")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--phi", type=float, required=True,
                   help="flow rate percent")
    p.add_argument("--dims", default=None, help="NX,NY,NZ (default: config grid)")
    p.add_argument("--iso", type=float, default=None,
                   help="threshold level (default 0.5 occupancy / 0.0 sdf)")
    p.add_argument("--slice", type=int, default=None,
                   help="also export this z slice as PGM")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="L1 + SSIM between two volumes")
    common(p, config_required=False)
    p.add_argument("--a", required=True, help="first volume")
    p.add_argument("--b", required=True, help="second volume")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("weight-curve", help="digital weight across flow rates")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=300.0)
    p.add_argument("--step", type=float, default=5.0)
    p.add_argument("--scale", type=int, default=1,
                   help="divide config dims by this factor")
    p.add_argument("--dims", default=None, help="NX,NY,NZ override")
    p.add_argument("--compare-checkpoint", default=None,
                   help="second checkpoint plotted alongside")
    p.set_defaults(func=cmd_weight_curve)

    p = sub.add_parser("optimize", help="per-layer flow schedule search")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--phi-min", type=float, default=45.0)
    p.add_argument("--phi-max", type=float, default=280.0)
    p.add_argument("--phi-step", type=float, default=1.0)
    p.add_argument("--dims", default=None, help="NX,NY,NZ override")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("register", help="align two scans (bed-constrained)")
    common(p, config_required=False)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--max-points", type=int, default=2000)
    p.add_argument("--outlier-w", type=float, default=0.1)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_register)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args)
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        _log(f"numeric failure: {exc}")
        return EXIT_NUMERIC
    except (VgridError, nf.CheckpointError) as exc:
        _log(f"i/o error: {exc}")
        return EXIT_IO
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
