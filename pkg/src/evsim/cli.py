"""Command-line interface: ``evsim {simulate,stats,render,bench,synth}``.

Set ``EVSIM_LOG_LEVEL`` (e.g. ``INFO`` or ``DEBUG``) for progress logging on
stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, io, metrics
from .core import CROSSING_MODES, FLOW_PRESETS, METHODS, EventStream, SimulatorConfig, SimulatorError
from .scenes import SCENES, make_scene
from .simulate import Simulator

log = logging.getLogger("evsim")


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError(f"resolution must be positive, got {text!r}")
    return w, h


def _positive(kind):
    def parse(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evsim", description="Convert frame sequences to event streams.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="convert an image sequence to an event file")
    p.add_argument("input", help="directory, glob pattern or single image")
    p.add_argument("-o", "--output", required=True, help="event file (.txt/.csv for text, anything else binary)")
    p.add_argument("--method", choices=METHODS, default="dense")
    p.add_argument("--c-pos", type=float, help="positive threshold (method default if omitted)")
    p.add_argument("--c-neg", type=float, help="negative threshold (method default if omitted)")
    p.add_argument("--n-interp", type=int, help="interpolated frames per interval (method default if omitted)")
    p.add_argument("--flow-preset", choices=FLOW_PRESETS, default="low_quality")
    p.add_argument("--selection-threshold", type=float, help="sparse pixel selection threshold (default: c-pos)")
    p.add_argument("--events-per-crossing", choices=CROSSING_MODES, default="single")
    p.add_argument("--exclude-endpoints", action="store_true",
                   help="leave the two real frames out of the difference chain")
    p.add_argument("--fps", type=_positive(float), default=30.0, help="input frame rate (default 30)")
    p.add_argument("--resize", type=_resolution, metavar="WxH", help="resize frames before simulation")

    p = sub.add_parser("stats", help="events per pixel per second of an event file")
    p.add_argument("input")
    p.add_argument("--resolution", type=_resolution, metavar="WxH", help="sensor size for text files")
    p.add_argument("--duration", type=_positive(float),
                   help="seconds (default: last timestamp, or 1 s for an empty file)")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")

    p = sub.add_parser("render", help="accumulated-event PNG per frame interval")
    p.add_argument("input")
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--fps", type=_positive(float), default=30.0, help="frame rate the windows mimic")
    p.add_argument("--resolution", type=_resolution, metavar="WxH", help="sensor size for text files")

    p = sub.add_parser("bench", help="runtime benchmark of all methods and presets")
    p.add_argument("--scene", choices=bench.BENCH_SCENES + ("both",), default="both")
    p.add_argument("--resolution", type=_resolution, default=(640, 480), metavar="WxH")
    p.add_argument("--n-frames", type=_positive(int), default=10)
    p.add_argument("--runs", type=_positive(int), default=10)
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--presets", nargs="+", choices=FLOW_PRESETS)
    p.add_argument("--csv", help="write the results table here instead of stdout")
    p.add_argument("--json", help="also write a bar-chart summary here")

    p = sub.add_parser("synth", help="write a synthetic test scene as PNG frames")
    p.add_argument("scene", choices=SCENES)
    p.add_argument("-o", "--output-dir", required=True)
    p.add_argument("--resolution", type=_resolution, metavar="WxH")
    p.add_argument("--n-frames", type=_positive(int))
    p.add_argument("--fps", type=_positive(float))
    return parser


def config_from_args(args) -> SimulatorConfig:
    return SimulatorConfig.for_method(
        args.method,
        c_pos=args.c_pos,
        c_neg=args.c_neg,
        n_interp=args.n_interp,
        flow_preset=args.flow_preset,
        selection_threshold=args.selection_threshold,
        events_per_crossing=args.events_per_crossing,
        include_endpoints=not args.exclude_endpoints,
    )


def simulate_frames(frames, config: SimulatorConfig) -> EventStream:
    """Run a fresh simulator over ``frames`` and join the per-interval output."""
    sim = Simulator(config)
    parts = [sim.push_frame(f) for f in frames]
    return EventStream.concatenate((frames[0].width, frames[0].height), parts)


def cmd_simulate(args) -> int:
    config = config_from_args(args)
    source = io.FrameSource.from_spec(args.input, args.fps, args.resize)
    frames = io.load_frames(source)
    log.info("loaded %d frames of %dx%d", len(frames), frames[0].width, frames[0].height)
    stream = simulate_frames(frames, config)
    io.write_events(stream, args.output)
    print(f"wrote {len(stream)} events to {args.output}")
    return 0


def _read(args) -> EventStream:
    return io.read_events(args.input, args.resolution)


def default_duration(stream: EventStream) -> float:
    if len(stream) and stream.t[-1] > 0:
        return float(stream.t[-1]) / 1e6
    return 1.0


def cmd_stats(args) -> int:
    stream = _read(args)
    duration = args.duration if args.duration is not None else default_duration(stream)
    stats = metrics.events_per_pixel_second(stream, duration)
    if args.json:
        print(json.dumps(stats.as_dict()))
    else:
        print(f"total_events {stats.total_events}")
        print(f"duration_s {stats.duration:.6f}")
        print(f"mean_rate {stats.mean_rate:.6g}")
        print(f"std_rate {stats.std_rate:.6g}")
    return 0


def render_windows(stream: EventStream, fps: float) -> list[tuple[int, int]]:
    """Half-open windows matching the simulator intervals ``(t_{k-1}, t_k]``."""
    if not len(stream):
        return []
    last = int(stream.t[-1])
    times = [0]
    k = 1
    while times[-1] < last:
        times.append(int(np.floor(k * 1_000_000 / fps + 0.5)))
        k += 1
    if len(times) == 1:
        times.append(int(np.floor(1_000_000 / fps + 0.5)))
    return [(a + 1, b + 1) for a, b in zip(times, times[1:])]


def cmd_render(args) -> int:
    stream = _read(args)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    windows = render_windows(stream, args.fps)
    digits = max(4, len(str(len(windows))))
    for k, (a, b) in enumerate(windows, 1):
        acc = metrics.accumulate(stream, a, b)
        io.render_accumulated(acc, out / f"events_{k:0{digits}d}.png")
    print(f"wrote {len(windows)} images to {out}")
    return 0


def cmd_bench(args) -> int:
    scenes = bench.BENCH_SCENES if args.scene == "both" else (args.scene,)
    rows = []
    for scene in scenes:
        rows += bench.bench_suite(scene, args.resolution, args.n_frames, args.runs, args.methods, args.presets)
    table = bench.rows_to_csv(rows)
    if args.csv:
        Path(args.csv).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    if args.json:
        bench.write_summary(rows, args.json)
    return 0


def cmd_synth(args) -> int:
    kwargs = {}
    if args.resolution:
        kwargs["width"], kwargs["height"] = args.resolution
    if args.n_frames:
        kwargs["n_frames"] = args.n_frames
    if args.fps:
        kwargs["fps"] = args.fps
    scene = make_scene(args.scene, **kwargs)
    out = Path(args.output_dir)
    io.save_frames(scene.frames, out)
    with open(out / "positions.csv", "w", encoding="utf-8") as fh:
        fh.write("frame,t,x,y\n")
        for k, (f, (x, y)) in enumerate(zip(scene.frames, scene.positions)):
            fh.write(f"{k},{f.timestamp},{x:g},{y:g}\n")
    print(f"wrote {len(scene.frames)} frames of {scene.name} at {scene.fps:g} fps to {out}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "stats": cmd_stats,
    "render": cmd_render,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    level = os.environ.get("EVSIM_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SimulatorError, ValueError, OSError) as exc:
        print(f"evsim {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
