import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evsim.core import EventStream
from evsim.metrics import BOTH, NEGATIVE, NONE, POSITIVE, accumulate, events_per_pixel_second
from oracles import accumulate_oracle, rates_oracle, stream_tuples


def random_stream(g, n, w=6, h=5, t_max=1000):
    return EventStream.from_arrays(
        (w, h), g.integers(0, w, n), g.integers(0, h, n), g.integers(0, t_max, n), g.choice([-1, 1], n)
    )


streams = st.builds(
    lambda seed, n: random_stream(np.random.default_rng(seed), n),
    st.integers(0, 2**32), st.integers(0, 300),
)


def test_empty_stream_rates_are_zero():
    s = events_per_pixel_second(EventStream.empty((4, 3)), 2.5)
    assert (s.mean_rate, s.std_rate, s.total_events, s.duration) == (0, 0, 0, 2.5)


def test_hand_computed_two_by_two():
    s = EventStream.from_arrays((2, 2), [0] * 4, [0] * 4, [1, 2, 3, 4], [1, -1, 1, 1])
    stats = events_per_pixel_second(s, 2.0)
    assert stats.mean_rate == pytest.approx(0.5, abs=1e-12)
    assert stats.std_rate == pytest.approx(np.sqrt(((2 - 0.5) ** 2 + 3 * 0.25) / 4), abs=1e-12)


def test_uniform_rate():
    gy, gx = np.mgrid[0:3, 0:4]
    s = EventStream.from_arrays((4, 3), gx.ravel(), gy.ravel(), np.zeros(12), np.ones(12))
    stats = events_per_pixel_second(s, 1.0)
    assert (stats.mean_rate, stats.std_rate) == (1.0, 0.0)


@pytest.mark.parametrize("duration", [0, -1.0])
def test_rates_reject_non_positive_duration(duration):
    with pytest.raises(ValueError):
        events_per_pixel_second(EventStream.empty((2, 2)), duration)


@given(streams, st.floats(0.01, 100))
def test_rates_match_oracle(s, duration):
    stats = events_per_pixel_second(s, duration)
    mean, std = rates_oracle(stream_tuples(s), s.width, s.height, duration)
    assert stats.mean_rate == pytest.approx(mean, rel=1e-9, abs=1e-12)
    assert stats.std_rate == pytest.approx(std, rel=1e-9, abs=1e-12)
    assert stats.mean_rate == pytest.approx(len(s) / (s.width * s.height * duration))


@given(streams)
def test_doubling_multiplicity_doubles_mean(s):
    doubled = EventStream.from_arrays(s.resolution, *(np.repeat(getattr(s, c), 2) for c in "xytp"))
    a = events_per_pixel_second(s, 3.0)
    b = events_per_pixel_second(doubled, 3.0)
    assert b.mean_rate == pytest.approx(2 * a.mean_rate)
    assert b.std_rate == pytest.approx(2 * a.std_rate)


def test_accumulate_empty_is_all_none():
    acc = accumulate(EventStream.empty((5, 4)), 0, 10)
    assert acc.classes.shape == (4, 5) and (acc.classes == NONE).all()


def test_accumulate_both_polarities():
    s = EventStream.from_arrays((3, 3), [1, 1, 2], [1, 1, 0], [3, 4, 5], [1, -1, -1])
    acc = accumulate(s, 0, 10)
    assert acc.classes[1, 1] == BOTH
    assert acc.classes[0, 2] == NEGATIVE
    assert acc.counts() == {"none": 7, "positive": 0, "negative": 1, "both": 1}


def test_accumulate_rejects_inverted_window():
    with pytest.raises(ValueError):
        accumulate(EventStream.empty((2, 2)), 5, 5)


@settings(max_examples=60)
@given(streams, st.integers(0, 1000), st.integers(1, 1000))
def test_accumulate_matches_oracle(s, t0, span):
    acc = accumulate(s, t0, t0 + span)
    assert acc.classes.tolist() == accumulate_oracle(stream_tuples(s), s.width, s.height, t0, t0 + span)
    assert (acc.t_start, acc.t_end) == (t0, t0 + span)


def test_window_is_half_open():
    s = EventStream.from_arrays((2, 1), [0, 1], [0, 0], [10, 20], [1, 1])
    acc = accumulate(s, 10, 20)
    assert acc.classes.tolist() == [[POSITIVE, NONE]]


@given(streams, st.integers(1, 999))
def test_adjacent_windows_partition_events(s, cut):
    whole = s.time_window(0, 1000)
    left, right = s.time_window(0, cut), s.time_window(cut, 1000)
    assert len(left) + len(right) == len(whole)
    w, h = s.resolution

    def counts(part):
        return np.bincount(part.y.astype(int) * w + part.x, minlength=w * h)

    assert np.array_equal(counts(left) + counts(right), counts(whole))
    a, b, c = accumulate(s, 0, cut), accumulate(s, cut, 1000), accumulate(s, 0, 1000)
    assert np.array_equal(a.classes | b.classes, c.classes)
