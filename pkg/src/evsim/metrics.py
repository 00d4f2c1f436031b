"""Event-rate statistics and accumulated-event frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EventStream

# Pixel classes of an accumulated frame.
NONE, POSITIVE, NEGATIVE, BOTH = 0, 1, 2, 3
CLASS_NAMES = ("none", "positive", "negative", "both")


@dataclass(frozen=True)
class EventRateStats:
    """Events per pixel per second, averaged over all pixels.

    ``std_rate`` is the population standard deviation of the per-pixel rate
    map, i.e. the spread across pixels, not across time.
    """

    mean_rate: float
    std_rate: float
    duration: float
    total_events: int

    def as_dict(self) -> dict:
        return {
            "mean_rate": self.mean_rate,
            "std_rate": self.std_rate,
            "duration": self.duration,
            "total_events": self.total_events,
        }


def rate_map(stream: EventStream, duration: float) -> np.ndarray:
    """Per-pixel event counts divided by ``duration`` as a (height, width) array."""
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    w, h = stream.resolution
    flat = stream.y.astype(np.int64) * w + stream.x
    counts = np.bincount(flat, minlength=w * h)
    return (counts / float(duration)).reshape(h, w)


def events_per_pixel_second(stream: EventStream, duration: float) -> EventRateStats:
    rates = rate_map(stream, duration)
    return EventRateStats(
        mean_rate=float(rates.mean()),
        std_rate=float(rates.std()),
        duration=float(duration),
        total_events=len(stream),
    )


@dataclass(frozen=True, eq=False)
class AccumulatedFrame:
    """Per-pixel polarity class over the half-open window ``[t_start, t_end)``.

    ``classes`` is a (height, width) uint8 array holding NONE, POSITIVE,
    NEGATIVE or BOTH.
    """

    classes: np.ndarray
    t_start: int
    t_end: int

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    def counts(self) -> dict[str, int]:
        n = np.bincount(self.classes.ravel(), minlength=4)
        return {name: int(c) for name, c in zip(CLASS_NAMES, n)}


def accumulate(stream: EventStream, t_start: int, t_end: int) -> AccumulatedFrame:
    if not t_start < t_end:
        raise ValueError(f"accumulation window must satisfy t_start < t_end, got [{t_start}, {t_end})")
    w, h = stream.resolution
    win = stream.time_window(t_start, t_end)
    flat = win.y.astype(np.int64) * w + win.x
    classes = np.zeros(w * h, np.uint8)
    # POSITIVE and NEGATIVE are distinct bits, so OR-ing yields BOTH. Repeated
    # indices write identical values, so plain fancy assignment is safe.
    classes[flat[win.p > 0]] = POSITIVE
    neg = flat[win.p < 0]
    classes[neg] |= NEGATIVE
    return AccumulatedFrame(classes.reshape(h, w), int(t_start), int(t_end))
