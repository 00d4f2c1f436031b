import json
import time

import pytest

from evsim.bench import (
    RuntimeStats,
    bench_frames,
    bench_method,
    bench_suite,
    rows_to_csv,
    rows_to_summary,
    suite_combos,
    write_summary,
)
from evsim.core import SimulatorConfig
from evsim.scenes import translating_square


class NoOp:
    def __init__(self, config):
        pass

    def push_frame(self, frame):
        return None


class Counting:
    created = 0

    def __init__(self, config):
        Counting.created += 1
        self.pushed = 0

    def push_frame(self, frame):
        self.pushed += 1
        time.sleep(0.001)


def test_runtime_stats_sample_std():
    s = RuntimeStats.from_samples([1.0, 2.0, 3.0], 5)
    assert s.mean_ms == 2.0
    assert s.std_ms == pytest.approx(1.0)  # sample (n - 1) std
    assert (s.runs, s.total_frames, s.real_time) == (3, 15, True)
    assert RuntimeStats.from_samples([31.0], 2).real_time is False
    assert RuntimeStats.from_samples([7.0], 2).std_ms == 0.0


def test_noop_is_near_zero_and_real_time():
    frames = translating_square(n_frames=10).frames
    s = bench_method(SimulatorConfig(), frames, simulator_factory=NoOp)
    assert s.runs == 10
    assert 0 <= s.mean_ms < 1.0
    assert s.real_time


def test_fresh_simulator_per_run_plus_warmup():
    Counting.created = 0
    frames = translating_square(n_frames=3).frames
    s = bench_method(SimulatorConfig(), frames, runs=4, simulator_factory=Counting)
    assert Counting.created == 5
    assert s.mean_ms >= 1.0
    Counting.created = 0
    bench_method(SimulatorConfig(), frames, runs=2, warmup=False, simulator_factory=Counting)
    assert Counting.created == 2


def test_empty_sequence_rejected():
    with pytest.raises(ValueError):
        bench_method(SimulatorConfig(), [])
    with pytest.raises(ValueError):
        bench_method(SimulatorConfig(), translating_square().frames, runs=0)


def test_difference_only_faster_than_dense_on_texture():
    frames = bench_frames("high_dynamics", (640, 480), 3)
    fast = bench_method(SimulatorConfig.for_method("difference_only"), frames, runs=3)
    slow = bench_method(SimulatorConfig.for_method("dense"), frames, runs=3)
    assert fast.mean_ms < slow.mean_ms


def test_suite_combos():
    assert suite_combos(["difference_only"]) == [("difference_only", "none")]
    assert len(suite_combos()) == 7
    with pytest.raises(ValueError):
        suite_combos(["warp"])


def test_single_method_suite_gives_single_row(tmp_path):
    rows = bench_suite("low_dynamics", (96, 64), n_frames=3, runs=2, methods=["sparse"], presets=["low_quality"])
    assert len(rows) == 1
    row = rows[0]
    assert (row.scene, row.width, row.height, row.method, row.preset) == ("low_dynamics", 96, 64, "sparse", "low_quality")
    table = rows_to_csv(rows).splitlines()
    assert table[0] == "scene,width,height,method,preset,mean_ms,std_ms,runs,total_frames,real_time"
    assert table[1].startswith("low_dynamics,96,64,sparse,low_quality,")
    write_summary(rows, tmp_path / "s.json")
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["real_time_ms"] == 30.0
    assert set(summary["scenes"]["low_dynamics"]) == {"sparse/low_quality"}


def test_full_suite_covers_all_methods_and_presets():
    rows = bench_suite("high_dynamics", (64, 48), n_frames=3, runs=1)
    assert {(r.method, r.preset) for r in rows} == set(suite_combos())
    assert set(rows_to_summary(rows)["scenes"]) == {"high_dynamics"}


def test_bench_frames_scenes():
    hi = bench_frames("high_dynamics", (80, 60), 3)
    lo = bench_frames("low_dynamics", (80, 60), 3)
    assert len(hi) == len(lo) == 3 and hi[0].shape == (60, 80)
    with pytest.raises(ValueError):
        bench_frames("medium", (80, 60), 3)
