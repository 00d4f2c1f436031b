import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evsim.core import Frame, IncompatibleFramesError
from evsim.flow import (
    HIGH_QUALITY,
    LOW_QUALITY,
    FlowField,
    FlowPreset,
    bilinear_sample,
    build_pyramid,
    downsample,
    estimate_dense_flow,
    estimate_sparse_flow,
    get_preset,
    track_points,
)
from evsim.scenes import texture
from oracles import bilinear_oracle

PRESETS = [LOW_QUALITY, HIGH_QUALITY]


def shifted_pair(shift, w=160, h=120, seed=0, sigma=2.0):
    """Texture crop and the same texture moved by ``shift`` (content moves +shift)."""
    big = texture(w + 20, h + 20, seed=seed, sigma=sigma, lo=0, hi=255)
    sx, sy = shift
    a = big[10:10 + h, 10:10 + w]
    b = big[10 - sy:10 - sy + h, 10 - sx:10 - sx + w]
    return Frame(np.rint(a).astype(np.uint8)), Frame(np.rint(b).astype(np.uint8), 1)


def square_pair(shift, size=8, at=(20, 20), shape=(64, 64)):
    a = np.zeros(shape, np.uint8)
    b = np.zeros(shape, np.uint8)
    x, y = at
    a[y:y + size, x:x + size] = 255
    b[y + shift[1]:y + shift[1] + size, x + shift[0]:x + shift[0] + size] = 255
    return Frame(a), Frame(b, 1)


# -- primitives -------------------------------------------------------------

def test_bilinear_sample_matches_oracle(rng):
    img = rng.random((7, 9)) * 255
    xs = rng.uniform(-2, 11, 200)
    ys = rng.uniform(-2, 9, 200)
    got = bilinear_sample(img, xs, ys)
    want = [bilinear_oracle(img.tolist(), x, y) for x, y in zip(xs, ys)]
    assert np.allclose(got, want, atol=1e-9)


def test_bilinear_sample_is_exact_on_the_grid(rng):
    img = rng.random((5, 6))
    gy, gx = np.mgrid[0:5, 0:6].astype(float)
    assert np.array_equal(bilinear_sample(img, gx, gy), img)


def test_downsample_preserves_constant_images():
    img = np.full((16, 12), 37.0, np.float32)
    out = downsample(img)
    assert out.shape == (8, 6)
    assert np.allclose(out, 37.0)


def test_pyramid_stops_at_small_sizes():
    pyr = build_pyramid(np.zeros((20, 20), np.float32), 6)
    assert [p.shape for p in pyr] == [(20, 20), (10, 10)]
    pyr = build_pyramid(np.zeros((40, 30), np.float32), 6, min_size=13)
    assert [p.shape for p in pyr] == [(40, 30), (20, 15)]


def test_presets():
    assert LOW_QUALITY.pyramid_levels < HIGH_QUALITY.pyramid_levels
    assert LOW_QUALITY.iterations_per_level < HIGH_QUALITY.iterations_per_level
    assert get_preset("high_quality") is HIGH_QUALITY
    with pytest.raises(ValueError):
        get_preset("medium")
    with pytest.raises(ValueError):
        FlowPreset(0, 1, 1)


def test_flow_field_validation():
    with pytest.raises(ValueError):
        FlowField(np.zeros((2, 2)), np.full((2, 2), np.nan))
    with pytest.raises(ValueError):
        FlowField(np.zeros((2, 2)), np.zeros((2, 3)))


# -- dense ------------------------------------------------------------------

@pytest.mark.parametrize("preset", PRESETS)
def test_identical_frames_give_zero_flow(preset):
    a, _ = shifted_pair((0, 0))
    fl = estimate_dense_flow(a, a.with_timestamp(1), preset)
    assert np.abs(fl.du).max() == 0 and np.abs(fl.dv).max() == 0


@pytest.mark.parametrize("preset", PRESETS)
def test_square_translation(preset):
    a, b = square_pair((2, 0))
    fl = estimate_dense_flow(a, b, preset)
    assert abs(fl.du[20:28, 20:28].mean() - 2) <= 0.5
    assert abs(fl.dv[20:28, 20:28].mean()) <= 0.5


@pytest.mark.parametrize("preset", PRESETS)
def test_uniform_regions_get_zero_flow(preset):
    a, b = square_pair((2, 0))
    fl = estimate_dense_flow(a, b, preset)
    assert fl.du[50:, :].max() == 0 and fl.dv[50:, :].max() == 0


@pytest.mark.parametrize("preset", PRESETS)
@pytest.mark.parametrize("shift", [(1, 0), (0, -1), (3, 2), (-4, 4), (4, -3)])
def test_textured_translation_median_error(preset, shift):
    a, b = shifted_pair(shift)
    fl = estimate_dense_flow(a, b, preset)
    inner = (slice(8, -8), slice(8, -8))
    err = np.hypot(fl.du[inner] - shift[0], fl.dv[inner] - shift[1])
    assert np.median(err) < 0.5


def test_low_quality_is_faster_than_high_quality():
    a, b = shifted_pair((2, 1), 640, 480)

    def best(preset):
        times = []
        for _ in range(3):
            t = time.perf_counter()
            estimate_dense_flow(a, b, preset)
            times.append(time.perf_counter() - t)
        return min(times)

    assert best(LOW_QUALITY) < best(HIGH_QUALITY)


def test_dense_rejects_mismatched_frames():
    with pytest.raises(IncompatibleFramesError):
        estimate_dense_flow(Frame(np.zeros((8, 8), np.uint8)), Frame(np.zeros((8, 9), np.uint8), 1))


def test_dense_is_deterministic():
    a, b = shifted_pair((2, 1))
    f1 = estimate_dense_flow(a, b)
    f2 = estimate_dense_flow(a, b)
    assert np.array_equal(f1.du, f2.du) and np.array_equal(f1.dv, f2.dv)


# -- sparse -----------------------------------------------------------------

@pytest.mark.parametrize("preset", PRESETS)
def test_sparse_square_corner(preset):
    a, b = square_pair((3, 1))
    sf = estimate_sparse_flow(a, b, [(20, 20), (27, 27)], preset)
    assert sf.status.all()
    assert np.abs(sf.displacements - [3, 1]).max() <= 0.5


@pytest.mark.parametrize("preset", PRESETS)
def test_sparse_flat_region_is_lost(preset):
    a, b = square_pair((3, 1))
    sf = estimate_sparse_flow(a, b, [(50, 5), (5, 50)], preset)
    assert not sf.status.any()


@pytest.mark.parametrize("preset", PRESETS)
def test_sparse_identical_frames(preset, rng):
    a, _ = shifted_pair((0, 0))
    pts = np.column_stack([rng.integers(0, a.width, 50), rng.integers(0, a.height, 50)])
    sf = estimate_sparse_flow(a, a.with_timestamp(1), pts, preset)
    assert sf.status.all()
    assert not sf.displacements.any()


def test_sparse_empty_point_set():
    a, b = square_pair((1, 0))
    sf = estimate_sparse_flow(a, b, np.zeros((0, 2), int))
    assert len(sf) == 0


def test_sparse_rejects_points_outside():
    a, b = square_pair((1, 0))
    with pytest.raises(IncompatibleFramesError):
        estimate_sparse_flow(a, b, [(64, 0)])
    with pytest.raises(IncompatibleFramesError):
        estimate_sparse_flow(a, b, [(-1, 3)])


def test_sparse_destination_outside_frame_is_lost():
    # A point tracked with a displacement that lands left of column 0.
    a, b = shifted_pair((-4, 0), 96, 72)
    sf = estimate_sparse_flow(a, b, [(1, 30), (2, 40), (50, 30)], LOW_QUALITY)
    dest_x = sf.points[:, 0] + sf.displacements[:, 0]
    assert (dest_x < 0).any()
    assert not sf.status[dest_x < 0].any()
    assert sf.status[2]


@pytest.mark.parametrize("preset", PRESETS)
@pytest.mark.parametrize("shift", [(2, 1), (-3, 2)])
def test_sparse_full_grid_agrees_with_dense(preset, shift):
    a, b = shifted_pair(shift, 96, 72)
    dense = estimate_dense_flow(a, b, preset)
    gy, gx = np.mgrid[0:a.height, 0:a.width]
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    sf = estimate_sparse_flow(a, b, pts, preset)
    diff = np.hypot(sf.displacements[:, 0] - dense.du.ravel(), sf.displacements[:, 1] - dense.dv.ravel())
    assert np.median(diff[sf.status]) < 1.0


@settings(max_examples=10, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(0, 1000))
def test_sparse_recovers_integer_shifts(sx, sy, seed):
    a, b = shifted_pair((sx, sy), 96, 72, seed=seed)
    g = np.random.default_rng(seed)
    pts = np.column_stack([g.integers(16, 80, 40), g.integers(16, 56, 40)])
    sf = estimate_sparse_flow(a, b, pts, LOW_QUALITY)
    err = np.hypot(sf.displacements[:, 0] - sx, sf.displacements[:, 1] - sy)
    assert np.median(err[sf.status]) < 0.5


def test_sparse_is_deterministic():
    a, b = shifted_pair((2, 1))
    pts = [(30, 30), (60, 40), (100, 90)]
    s1 = estimate_sparse_flow(a, b, pts)
    s2 = estimate_sparse_flow(a, b, pts)
    assert np.array_equal(s1.displacements, s2.displacements)
    assert np.array_equal(s1.status, s2.status)


def test_forward_backward_error_small_for_true_translation():
    from evsim.flow import forward_backward_error, track_points
    a, b = shifted_pair((3, -2), 96, 72)
    pts = np.array([(30, 30), (50, 40), (70, 20)])
    disp, ok = track_points(a.pixels, b.pixels, pts)
    assert ok.all()
    assert (forward_backward_error(a.pixels, b.pixels, pts, disp) < 0.75).all()


def test_forward_backward_check_drops_inconsistent_tracks():
    a, b = shifted_pair((3, -2), 96, 72)
    pts = [(30, 30), (50, 40)]
    plain = estimate_sparse_flow(a, b, pts)
    checked = estimate_sparse_flow(a, b, pts, max_fb_error=1.0)
    assert np.array_equal(plain.status, checked.status)
    # Unrelated second frame: forward tracks cannot be reproduced backwards.
    c = Frame(np.rint(texture(96, 72, seed=99, sigma=2.0, lo=0, hi=255)).astype(np.uint8), 1)
    grid = np.column_stack([np.arange(10, 86, 5), np.full(16, 36)])
    loose = estimate_sparse_flow(a, c, grid)
    strict = estimate_sparse_flow(a, c, grid, max_fb_error=1.0)
    assert strict.status.sum() < loose.status.sum()
    assert not (strict.status & ~loose.status).any()


def test_track_points_rejects_unknown_border():
    img = np.zeros((32, 32), np.float32)
    with pytest.raises(ValueError):
        track_points(img, img, np.array([[5, 5]]), LOW_QUALITY, border="wrap")


def test_downsample_zero_border_fades_toward_the_edge():
    img = np.full((16, 16), 10.0, np.float32)
    edge = downsample(img)
    zero = downsample(img, "zero")
    assert np.allclose(edge, 10.0)
    assert zero[0, 0] < 10.0 and np.isclose(zero[4, 4], 10.0)


@pytest.mark.parametrize("preset", [LOW_QUALITY, HIGH_QUALITY])
def test_zero_border_tracks_blob_next_to_the_edge(preset):
    # A bright blob a few pixels from the border moving toward it: with
    # replicated borders the coarse levels see a wall, with zero borders
    # the blob keeps its shape.
    w, h = 160, 80
    yy, xx = np.mgrid[:h, :w]
    def blob(cx):
        return np.where(np.hypot(xx - cx, yy - 40) <= 2.5, 255.0, 0.0).astype(np.float32)
    a, b = blob(140), blob(152)
    pts = np.array([[140, 40], [139, 40], [141, 40]])
    disp, ok = track_points(a, b, pts, preset, border="zero")
    assert ok.all()
    assert np.abs(disp - [12, 0]).max() < 1.0
