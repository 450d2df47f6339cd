"""Command line front end.

Subcommands:

- ``simulate``: generate a seeded scene and dump its tensors as GTED files.
- ``track``: run the full multi-seed, multi-mode study and emit CSV reports.
- ``project``: one-shot null-space projector from GTED feature files.
- ``bench``: projector micro-benchmark over a list of channel counts.
- ``selftest``: quick invariant battery; exit 0 iff everything holds.

Exit codes: 0 success, 1 runtime failure, 2 config/usage error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import math
import os
import sys
import tempfile

import numpy as np

from nulltrack import __version__
from nulltrack.bench import CSV_HEADER as BENCH_HEADER
from nulltrack.bench import bench_projector
from nulltrack.config import ExperimentConfig, load_config
from nulltrack.errors import ConfigError, FormatError, ValidationError
from nulltrack.linalg import ThresholdPolicy, default_ridge, nullspace_projector, regularized_correlation, whiten_matrix
from nulltrack.metrics import ATTRIBUTES, attribute_masks, evaluate, suc_auc
from nulltrack.scenes import build_sequence_spec, gen_scene
from nulltrack.tensorio import Tensor, tensor_read, tensor_write
from nulltrack.tracker import TrackerConfig, default_tracker_config, run_tracker

RUN_CSV_COLUMNS = (
    "seed", "mode", "frame", "iou", "argmax_agree", "peak", "retained_rank",
    "t_fuse_ms", "t_predict_ms", "t_edit_ms", "t_localize_ms", "t_regress_ms",
)

SUMMARY_CSV_COLUMNS = ("mode", "attribute", "mean_iou", "suc_auc", "n")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.10g}"
    return str(x)


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _metadata_line(cfg_hash: str) -> str:
    return f"# config_sha256={cfg_hash} tool_version={__version__}\n"


def _tracker_config_from(cfg: ExperimentConfig, collect_timings: bool) -> TrackerConfig:
    return default_tracker_config(
        cfg.c_sem,
        cfg.c_geo,
        (cfg.height, cfg.width),
        seed=cfg.params_seed,
        predictor=cfg.predictor,
        embedding_gain=cfg.embedding_gain,
        policy=ThresholdPolicy(eps_rel=cfg.eps_rel, eps_abs=cfg.eps_abs),
        ridge=cfg.ridge,
        projector_source=cfg.projector_source,
        refresh_stride=cfg.refresh_stride,
        ref_update_theta=cfg.ref_update_theta,
        label_sigma_factor=cfg.label_sigma_factor,
        collect_timings=collect_timings,
    )


def _run_one_seed(args):
    cfg, seed = args
    spec = build_sequence_spec(cfg.recipe(), seed)
    scene = gen_scene(spec)
    tracker_cfg = _tracker_config_from(cfg, cfg.timings)
    runs = {mode: run_tracker(scene, mode, tracker_cfg) for mode in cfg.modes}
    return seed, spec, runs


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> dict:
    """Execute the study and write runs.csv, summary.csv and summary.txt."""
    seeds = list(range(cfg.base_seed, cfg.base_seed + cfg.seeds))
    tasks = [(cfg, seed) for seed in seeds]
    if cfg.jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(cfg.jobs) as pool:
            results = pool.map(_run_one_seed, tasks)
    else:
        results = [_run_one_seed(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    cfg_hash = cfg.sha256()
    runs_buf = io.StringIO()
    runs_buf.write(_metadata_line(cfg_hash))
    writer = csv.writer(runs_buf, lineterminator="\n")
    writer.writerow(RUN_CSV_COLUMNS)
    for seed, _spec, runs in results:
        for mode in cfg.modes:
            run = runs[mode]
            for rec in run.records:
                timing = [
                    _fmt(rec.timings_ms[stage]) if stage in rec.timings_ms else ""
                    for stage in ("fuse", "predict", "edit", "localize", "regress")
                ]
                writer.writerow(
                    [seed, mode, rec.frame, _fmt(rec.iou), _fmt(rec.argmax_agree),
                     _fmt(rec.peak), rec.retained_rank] + timing
                )

    summary_buf = io.StringIO()
    summary_buf.write(_metadata_line(cfg_hash))
    writer = csv.writer(summary_buf, lineterminator="\n")
    writer.writerow(SUMMARY_CSV_COLUMNS)
    per_mode = {}
    for mode in cfg.modes:
        mode_runs = [runs[mode] for _, _, runs in results]
        mode_specs = [spec for _, spec, _ in results]
        metrics = evaluate(mode_runs, mode_specs)
        per_mode[mode] = metrics
        for attribute in ATTRIBUTES:
            pooled = np.concatenate(
                [run.ious()[attribute_masks(spec)[attribute]]
                 for run, spec in zip(mode_runs, mode_specs)]
            )
            writer.writerow(
                [mode, attribute, _fmt(float(pooled.mean()) if pooled.size else math.nan),
                 _fmt(suc_auc(pooled)), pooled.size]
            )

    lines = [f"nulltrack study  (config {cfg_hash}, tool {__version__})",
             f"seeds: {len(seeds)}  frames/seq: {cfg.frames}  modes: {', '.join(cfg.modes)}", ""]
    for mode, metrics in per_mode.items():
        lines.append(
            f"{mode:16s} mean IoU {metrics.mean_iou:.4f}  SUC AUC {metrics.suc_auc:.4f}  "
            f"argmax agreement {metrics.argmax_rate:.4f}"
        )
        for attribute in ("occlusion", "distractor", "clean"):
            mean = metrics.attr_mean_iou[attribute]
            n = metrics.attr_n[attribute]
            mean_txt = "n/a" if math.isnan(mean) else f"{mean:.4f}"
            lines.append(f"    {attribute:10s} mean IoU {mean_txt}  ({n} frames)")
    lines.append("")

    _atomic_write(os.path.join(out_dir, "runs.csv"), runs_buf.getvalue())
    _atomic_write(os.path.join(out_dir, "summary.csv"), summary_buf.getvalue())
    _atomic_write(os.path.join(out_dir, "summary.txt"), "\n".join(lines))
    return per_mode


def _cmd_track(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.modes is not None:
        overrides["modes"] = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    cfg = load_config(path=args.config, overrides=overrides)
    run_experiment(cfg, args.out)
    print(f"wrote runs.csv, summary.csv, summary.txt to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    overrides = {"base_seed": args.seed} if args.seed is not None else {}
    cfg = load_config(path=args.config, overrides=overrides)
    spec = build_sequence_spec(cfg.recipe(), cfg.base_seed)
    scene = gen_scene(spec)
    os.makedirs(args.out, exist_ok=True)
    for t, frame in enumerate(scene.frames):
        tensor_write(frame.v_s.tensor, os.path.join(args.out, f"frame_{t:06d}_sem.gted"))
        tensor_write(frame.v_g.tensor, os.path.join(args.out, f"frame_{t:06d}_geo.gted"))
    buf = io.StringIO()
    buf.write(_metadata_line(cfg.sha256()))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("frame", "left", "top", "right", "bottom"))
    for t, frame in enumerate(scene.frames):
        b = frame.gt_box
        writer.writerow((t, _fmt(b.left), _fmt(b.top), _fmt(b.right), _fmt(b.bottom)))
    _atomic_write(os.path.join(args.out, "gt_boxes.csv"), buf.getvalue())
    print(f"wrote {2 * len(scene.frames)} tensors and gt_boxes.csv to {args.out}")
    return 0


def _cmd_project(args) -> int:
    paths = sorted(glob.glob(args.features))
    if not paths:
        raise ValidationError(f"no GTED files match {args.features!r}")
    columns = []
    channels = None
    for path in paths:
        values = tensor_read(path).values.astype(np.float64)
        if values.ndim == 1:
            raise ValidationError(f"{path}: feature tensors need >= 2 axes")
        mat = values.reshape(values.shape[0], -1)
        if channels is None:
            channels = mat.shape[0]
        elif mat.shape[0] != channels:
            raise ValidationError(
                f"{path}: {mat.shape[0]} channels, expected {channels}"
            )
        columns.append(mat)
    raw = np.concatenate(columns, axis=1)
    zm = whiten_matrix(raw)
    ridge = args.ridge if args.ridge is not None else default_ridge(zm)
    policy = ThresholdPolicy(eps_rel=args.eps_rel)
    proj = nullspace_projector(regularized_correlation(zm, ridge), policy)
    tensor_write(Tensor(proj.p.astype(np.float32)), args.out)
    print(
        f"projector C={channels} N={zm.samples} ridge={ridge:.6g} "
        f"retained_rank={proj.retained_rank} -> {args.out}"
    )
    return 0


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    rows = [_metadata_line("bench"), BENCH_HEADER + "\n"]
    for c in sizes:
        stats = bench_projector(c, args.samples, args.reps, seed=args.seed or 0)
        rows.append(stats.csv_row() + "\n")
        print(f"C={c:5d} N={args.samples} mean={stats.mean_ms:.3f} ms "
              f"p50={stats.p50_ms:.3f} p95={stats.p95_ms:.3f}")
    if args.out:
        _atomic_write(args.out, "".join(rows))
    return 0


def _cmd_selftest(args) -> int:
    from nulltrack.selftest import run_selftest

    return run_selftest(verbose=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nulltrack",
        description="Null-space-edited tracking studies on synthetic scenes.",
    )
    parser.add_argument("--version", action="version", version=f"nulltrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="run the multi-seed, multi-mode study")
    p_track.add_argument("--config", default=None, help="config file path")
    p_track.add_argument("--seed", type=int, default=None, help="override base seed")
    p_track.add_argument("--out", default="out", help="output directory")
    p_track.add_argument("--modes", default=None, help="comma list of modes to run")
    p_track.add_argument("--jobs", type=int, default=None, help="parallel workers")
    p_track.set_defaults(fn=_cmd_track)

    p_sim = sub.add_parser("simulate", help="generate and dump one scene")
    p_sim.add_argument("--config", default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--out", default="scene")
    p_sim.set_defaults(fn=_cmd_simulate)

    p_proj = sub.add_parser("project", help="one-shot projector from GTED features")
    p_proj.add_argument("--features", required=True, help="glob of GTED feature files")
    p_proj.add_argument("--lambda", dest="ridge", type=float, default=None,
                        help="ridge (default: auto)")
    p_proj.add_argument("--eps-rel", type=float, default=1e-2)
    p_proj.add_argument("--out", required=True, help="output GTED path for the projector")
    p_proj.set_defaults(fn=_cmd_project)

    p_bench = sub.add_parser("bench", help="projector micro-benchmark")
    p_bench.add_argument("--sizes", default="64,128,256", help="comma list of C values")
    p_bench.add_argument("--samples", type=int, default=1024, help="N spatial samples")
    p_bench.add_argument("--reps", type=int, default=20)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=None, help="optional CSV path")
    p_bench.set_defaults(fn=_cmd_bench)

    p_self = sub.add_parser("selftest", help="run the invariant battery")
    p_self.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
