"""Command-line entry point: gen | run | eval | viz | bench."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import evaluation, events, pipeline, scarf, trace


def _config_from_args(args) -> pipeline.PipelineConfig:
    overrides = {
        "width": args.width, "height": args.height, "b": args.block_size,
        "alpha": args.alpha, "f_th": args.f_th, "delta_q": args.delta_q,
        "d_max": args.d_max, "mode": getattr(args, "mode", None),
        "events_per_step": getattr(args, "events_per_step", None),
        "window_start_s": getattr(args, "window_start", None),
        "window_end_s": getattr(args, "window_end", None),
        "playback": getattr(args, "playback", None),
    }
    if args.config:
        return pipeline.PipelineConfig.from_file(args.config, **overrides)
    return pipeline.PipelineConfig(
        **{k: v for k, v in overrides.items() if v is not None})


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--block-size", type=int, dest="block_size")
    p.add_argument("--alpha", type=float)
    p.add_argument("--f-th", type=float, dest="f_th")
    p.add_argument("--delta-q", type=float, dest="delta_q")
    p.add_argument("--d-max", type=float, dest="d_max")


def cmd_gen(args) -> int:
    spec = events.SceneSpec.from_json(args.scene)
    if args.seed is not None:
        spec.seed = args.seed
    stream, gt = events.generate_scene(spec)
    events.write_events(stream, args.events, args.format)
    if args.gt:
        events.write_ground_truth(gt, args.gt)
    print(f"wrote {len(stream)} events to {args.events}"
          + (f", {len(gt)} gt rows to {args.gt}" if args.gt else ""))
    return 0


def cmd_run(args) -> int:
    config = _config_from_args(args)
    stream = events.read_event_array(args.events, args.format)
    if config.mode == "threaded":
        rows, metrics = pipeline.run_threaded(stream, config)
    else:
        rows, metrics = pipeline.run_lockstep(stream, config)
    if args.trace:
        trace.write_trace(rows, args.trace)
    print(metrics.summary())
    return 0


def cmd_eval(args) -> int:
    rows = trace.read_trace(args.trace)
    gt = events.read_ground_truth(args.gt)
    geometry = events.SensorGeometry(args.width, args.height)
    tau = args.tolerance * geometry.diagonal
    points = evaluation.pr_series(rows, gt, geometry, tau,
                                  heatmap_dir=args.heatmap_dir)
    evaluation.write_pr_series(points, args.out)
    stats = evaluation.lifetime_stats(rows)
    print(f"pr_points={len(points)}")
    if points:
        print(f"final_precision={points[-1].precision:.4f}")
        print(f"final_recall={points[-1].recall:.4f}")
        print(f"final_f_score={points[-1].f_score:.4f}")
    print(f"segments={stats.count}")
    print(f"lifetime_mean_s={stats.mean_s:.3f}")
    print(f"lifetime_std_s={stats.std_s:.3f}")
    print(f"lifetime_max_s={stats.max_s:.3f}")
    return 0


def cmd_viz(args) -> int:
    config = _config_from_args(args)
    stream = events.read_event_array(args.events, args.format)
    run = pipeline.PipelineRun.create(config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    period = args.frame_period_us
    n_frames = 0
    if len(stream):
        n_frames = math.ceil((int(stream.t[-1]) + 1) / period)
        start = 0
        for k in range(1, n_frames + 1):
            end = int(stream.t.searchsorted(k * period, side="right"))
            chunk = stream[start:end]
            if len(chunk):
                run.storage.insert_batch(chunk.u, chunk.v)
            scarf.write_pgm(run.storage.render_frame(),
                            out_dir / f"frame_{k:06d}.pgm")
            start = end
    print(f"wrote {n_frames} frames to {out_dir}")
    return 0


def cmd_bench(args) -> int:
    config = _config_from_args(args)
    if config.window_start_s is None:
        config.window_start_s = 5.0
    if config.window_end_s is None:
        config.window_end_s = 10.0
    stream = events.read_event_array(args.events, args.format)
    rows, metrics = pipeline.run_threaded(
        stream, config, repeat=args.repeat,
        max_wall_s=config.window_end_s + 1.0)
    print(metrics.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evline",
        description="line segment detection and tracking on event streams")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scene")
    p.add_argument("--scene", required=True, help="scene spec JSON")
    p.add_argument("--events", required=True, help="output event stream")
    p.add_argument("--gt", help="output ground-truth CSV")
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--events", required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--mode", choices=["lockstep", "threaded"])
    p.add_argument("--trace", help="output trace CSV")
    p.add_argument("--events-per-step", type=int, dest="events_per_step")
    p.add_argument("--playback", choices=["fast", "paced"])
    p.add_argument("--window-start", type=float, dest="window_start")
    p.add_argument("--window-end", type=float, dest="window_end")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score a trace against ground truth")
    p.add_argument("--trace", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--tolerance", type=float, default=0.01,
                   help="fraction of image diagonal (default 0.01)")
    p.add_argument("--out", default="pr_series.csv")
    p.add_argument("--heatmap-dir", dest="heatmap_dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="replay events through storage, dump frames")
    p.add_argument("--events", required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--frame-period-us", type=int, default=100_000,
                   dest="frame_period_us")
    _add_config_flags(p)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("bench", help="threaded throughput benchmark")
    p.add_argument("--events", required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="binary")
    p.add_argument("--repeat", type=int, default=1,
                   help="replay the stream up to this many times")
    p.add_argument("--window-start", type=float, dest="window_start")
    p.add_argument("--window-end", type=float, dest="window_end")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
