"""Runtime benchmark harness.

Frames are generated or loaded before timing starts. One untimed warm-up pass
runs first; each measured run then feeds every frame through a fresh
simulator and records the wall time from the first push to the last return.
Per-frame time is that total divided by the number of frames.
"""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

from .core import FLOW_PRESETS, METHODS, Frame, SimulatorConfig
from .scenes import moving_ball, panning_texture
from .simulate import Simulator

log = logging.getLogger(__name__)

REAL_TIME_MS = 30.0
BENCH_SCENES = ("high_dynamics", "low_dynamics")


@dataclass(frozen=True)
class RuntimeStats:
    mean_ms: float  # per frame
    std_ms: float  # sample std of the per-frame time across runs
    runs: int
    total_frames: int
    real_time: bool

    @classmethod
    def from_samples(cls, per_frame_ms: Sequence[float], n_frames: int) -> "RuntimeStats":
        if not per_frame_ms:
            raise ValueError("need at least one run")
        mean = statistics.fmean(per_frame_ms)
        std = statistics.stdev(per_frame_ms) if len(per_frame_ms) > 1 else 0.0
        return cls(mean, std, len(per_frame_ms), n_frames * len(per_frame_ms), mean < REAL_TIME_MS)


def time_run(sim, frames: Sequence[Frame]) -> float:
    """Seconds taken to push every frame through ``sim``."""
    start = time.perf_counter()
    for f in frames:
        sim.push_frame(f)
    return time.perf_counter() - start


def bench_method(
    config: SimulatorConfig,
    frames: Sequence[Frame],
    runs: int = 10,
    warmup: bool = True,
    simulator_factory: Callable[[SimulatorConfig], object] | None = None,
) -> RuntimeStats:
    """Time ``runs`` passes of ``frames`` through fresh simulators built from ``config``.

    ``simulator_factory`` defaults to :class:`Simulator`; any object with a
    ``push_frame`` method can be benchmarked.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("cannot benchmark an empty frame sequence")
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    factory = simulator_factory or Simulator
    if warmup:
        time_run(factory(config), frames)
    samples = []
    for _ in range(runs):
        sim = factory(config)
        samples.append(time_run(sim, frames) * 1e3 / len(frames))
    return RuntimeStats.from_samples(samples, len(frames))


def bench_frames(scene: str, resolution: tuple[int, int], n_frames: int) -> list[Frame]:
    """Frames of the named benchmark scenario.

    ``high_dynamics`` is a full-frame panning texture (most pixels change
    every frame); ``low_dynamics`` is a single ball moving over a static
    textured background.
    """
    w, h = resolution
    if scene == "high_dynamics":
        return panning_texture(w, h, n_frames=n_frames).frames
    if scene == "low_dynamics":
        return moving_ball(w, h, n_frames=n_frames).frames
    raise ValueError(f"unknown bench scene {scene!r}; expected one of {BENCH_SCENES}")


@dataclass(frozen=True)
class BenchRow:
    scene: str
    width: int
    height: int
    method: str
    preset: str
    stats: RuntimeStats

    def flat(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "stats"}
        d.update(asdict(self.stats))
        return d


def suite_combos(methods: Iterable[str] | None = None, presets: Iterable[str] | None = None) -> list[tuple[str, str]]:
    """(method, preset) pairs; difference_only uses no flow so it appears once."""
    methods = list(METHODS if methods is None else methods)
    presets = list(FLOW_PRESETS if presets is None else presets)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    combos = []
    for m in methods:
        if m == "difference_only":
            combos.append((m, "none"))
        else:
            combos.extend((m, p) for p in presets)
    return combos


def bench_suite(
    scene: str,
    resolution: tuple[int, int] = (640, 480),
    n_frames: int = 10,
    runs: int = 10,
    methods: Iterable[str] | None = None,
    presets: Iterable[str] | None = None,
    frames: Sequence[Frame] | None = None,
) -> list[BenchRow]:
    """Benchmark every method at every flow preset on one scenario."""
    if frames is None:
        frames = bench_frames(scene, resolution, n_frames)
    w, h = frames[0].width, frames[0].height
    rows = []
    for method, preset in suite_combos(methods, presets):
        cfg = SimulatorConfig.for_method(method, flow_preset=None if preset == "none" else preset)
        stats = bench_method(cfg, frames, runs=runs)
        log.info("%s %dx%d %s/%s: %.2f +- %.2f ms/frame", scene, w, h, method, preset, stats.mean_ms, stats.std_ms)
        rows.append(BenchRow(scene, w, h, method, preset, stats))
    return rows


CSV_FIELDS = ("scene", "width", "height", "method", "preset", "mean_ms", "std_ms", "runs", "total_frames", "real_time")


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        d = r.flat()
        d["mean_ms"] = f"{d['mean_ms']:.4f}"
        d["std_ms"] = f"{d['std_ms']:.4f}"
        writer.writerow(d)
    return buf.getvalue()


def rows_to_summary(rows: Sequence[BenchRow]) -> dict:
    """Bar-chart friendly summary: ``{scene: {"method/preset": {mean_ms, std_ms}}}``."""
    out: dict = {"real_time_ms": REAL_TIME_MS, "scenes": {}}
    for r in rows:
        bars = out["scenes"].setdefault(r.scene, {})
        bars[f"{r.method}/{r.preset}"] = {"mean_ms": r.stats.mean_ms, "std_ms": r.stats.std_ms, "real_time": r.stats.real_time}
    return out


def write_summary(rows: Sequence[BenchRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows_to_summary(rows), fh, indent=2)
