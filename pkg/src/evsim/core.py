"""Domain types, difference frames and the thresholding event generator.

All intensities live on the linear 0-255 grayscale scale; differences are
computed in a widened signed type so that ``curr - prev`` never wraps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

METHODS = ("difference_only", "dense", "sparse", "difference_interp")
FLOW_PRESETS = ("low_quality", "high_quality")
CROSSING_MODES = ("single", "magnitude")

# (c_pos, c_neg, n_interp) per method, as used for the reference evaluation.
METHOD_DEFAULTS = {
    "difference_only": (2.0, -2.0, 0),
    "dense": (2.0, -2.0, 10),
    "sparse": (10.0, -10.0, 10),
    "difference_interp": (20.0, -20.0, 10),
}


class SimulatorError(Exception):
    """Base class for all errors raised by this package."""


class IncompatibleFramesError(SimulatorError, ValueError):
    """Frames with mismatching dimensions or out-of-order timestamps."""


class ConfigError(SimulatorError, ValueError):
    """Invalid simulator configuration."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """Single-channel 8-bit image with a timestamp in microseconds.

    ``pixels`` is stored as a ``(height, width)`` uint8 array; its row-major
    flattening is the canonical pixel order.
    """

    pixels: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError(f"frame pixels must be a non-empty 2-D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("frame intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        elif not px.flags.c_contiguous:
            px = np.ascontiguousarray(px)
        elif px.flags.writeable:
            px = px.copy()
        ts = int(self.timestamp)
        if ts < 0:
            raise ValueError(f"timestamp must be non-negative, got {ts}")
        object.__setattr__(self, "pixels", _frozen(px))
        object.__setattr__(self, "timestamp", ts)

    @classmethod
    def from_flat(cls, pixels: Sequence[int], width: int, height: int, timestamp: int = 0) -> "Frame":
        flat = np.asarray(pixels)
        if flat.size != width * height:
            raise ValueError(f"expected {width * height} pixels, got {flat.size}")
        return cls(flat.reshape(height, width), timestamp)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def with_timestamp(self, timestamp: int) -> "Frame":
        return Frame(self.pixels, timestamp)


@dataclass(frozen=True, eq=False)
class DifferenceFrame:
    """Signed per-pixel intensity change between two frames."""

    values: np.ndarray
    t_start: int
    t_end: int

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError("difference values must be a 2-D array")
        if v.dtype != np.int16:
            v = v.astype(np.int16)
        if self.t_start > self.t_end:
            raise ValueError(f"t_start {self.t_start} exceeds t_end {self.t_end}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int
    p: int

    def __post_init__(self):
        if self.p not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {self.p}")


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events stored column-wise.

    Ties in ``t`` are ordered by ``(y, x, p)``. Use :meth:`from_arrays` with
    ``sort=True`` to build a stream from unordered columns.
    """

    resolution: tuple[int, int]
    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint16))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint16))
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.int8))

    def __post_init__(self):
        w, h = (int(v) for v in self.resolution)
        if w <= 0 or h <= 0:
            raise ValueError(f"invalid resolution {self.resolution}")
        x = np.ascontiguousarray(self.x, dtype=np.uint16)
        y = np.ascontiguousarray(self.y, dtype=np.uint16)
        t = np.ascontiguousarray(self.t, dtype=np.int64)
        p = np.ascontiguousarray(self.p, dtype=np.int8)
        n = len(x)
        if not (len(y) == len(t) == len(p) == n):
            raise ValueError("event columns must have equal length")
        if n:
            if int(x.max()) >= w or int(y.max()) >= h:
                raise ValueError("event coordinates outside resolution")
            if t.min() < 0:
                raise ValueError("negative event timestamp")
            if np.any(np.diff(t) < 0):
                raise ValueError("event timestamps must be non-decreasing")
            if np.any((p != 1) & (p != -1)):
                raise ValueError("polarity must be +1 or -1")
        object.__setattr__(self, "resolution", (w, h))
        for name, arr in (("x", x), ("y", y), ("t", t), ("p", p)):
            if arr is getattr(self, name) and arr.flags.writeable:
                arr = arr.copy()
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def from_arrays(cls, resolution, x, y, t, p, sort: bool = True) -> "EventStream":
        x = np.asarray(x, dtype=np.uint16)
        y = np.asarray(y, dtype=np.uint16)
        t = np.asarray(t, dtype=np.int64)
        p = np.asarray(p, dtype=np.int8)
        if sort and len(t) > 1:
            order = np.lexsort((p, x, y, t))
            x, y, t, p = x[order], y[order], t[order], p[order]
        return cls(tuple(resolution), x, y, t, p)

    @classmethod
    def from_events(cls, resolution, events: Iterable[Event]) -> "EventStream":
        evs = list(events)
        return cls.from_arrays(
            resolution,
            [e.x for e in evs], [e.y for e in evs], [e.t for e in evs], [e.p for e in evs],
        )

    @classmethod
    def empty(cls, resolution) -> "EventStream":
        return cls(tuple(resolution))

    @classmethod
    def concatenate(cls, resolution, streams: Sequence["EventStream"]) -> "EventStream":
        """Join streams, re-sorting only if their time ranges interleave."""
        parts = [s for s in streams if len(s)]
        if not parts:
            return cls.empty(resolution)
        if len(parts) == 1:
            return parts[0]
        cols = [np.concatenate([getattr(s, c) for s in parts]) for c in "xytp"]
        ordered = all(a.t[-1] < b.t[0] for a, b in zip(parts, parts[1:]))
        return cls.from_arrays(resolution, *cols, sort=not ordered)

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return self.resolution == other.resolution and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in "xytp"
        )

    def time_window(self, t_start: int, t_end: int) -> "EventStream":
        """Events with ``t_start <= t < t_end``."""
        lo, hi = np.searchsorted(self.t, [t_start, t_end], side="left")
        return EventStream(self.resolution, self.x[lo:hi], self.y[lo:hi], self.t[lo:hi], self.p[lo:hi])


@dataclass(frozen=True)
class SimulatorConfig:
    """Simulation method and its parameters.

    ``selection_threshold=None`` means "use ``c_pos``". ``include_endpoints``
    controls whether the two real frames take part in the difference chain.
    """

    method: str = "dense"
    c_pos: float = 2.0
    c_neg: float = -2.0
    n_interp: int = 10
    flow_preset: str = "low_quality"
    selection_threshold: float | None = None
    events_per_crossing: str = "single"
    include_endpoints: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.c_pos > 0:
            raise ConfigError(f"c_pos must be positive, got {self.c_pos}")
        if not self.c_neg < 0:
            raise ConfigError(f"c_neg must be negative, got {self.c_neg}")
        if self.n_interp < 0:
            raise ConfigError(f"n_interp must be >= 0, got {self.n_interp}")
        if self.flow_preset not in FLOW_PRESETS:
            raise ConfigError(f"unknown flow preset {self.flow_preset!r}")
        if self.events_per_crossing not in CROSSING_MODES:
            raise ConfigError(f"events_per_crossing must be one of {CROSSING_MODES}")
        if self.selection_threshold is not None and not self.selection_threshold > 0:
            raise ConfigError("selection_threshold must be positive")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "SimulatorConfig":
        """Config with the reference thresholds and interpolation count for ``method``."""
        if method not in METHOD_DEFAULTS:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
        c_pos, c_neg, n = METHOD_DEFAULTS[method]
        params = dict(method=method, c_pos=c_pos, c_neg=c_neg, n_interp=n)
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**params)

    @property
    def effective_selection_threshold(self) -> float:
        return self.c_pos if self.selection_threshold is None else self.selection_threshold

    def replace(self, **changes) -> "SimulatorConfig":
        return replace(self, **changes)


def check_compatible(a: Frame, b: Frame) -> None:
    if a.shape != b.shape:
        raise IncompatibleFramesError(
            f"frame dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def difference_frame(prev: Frame, curr: Frame) -> DifferenceFrame:
    check_compatible(prev, curr)
    if prev.timestamp > curr.timestamp:
        raise IncompatibleFramesError(
            f"frames out of order: {prev.timestamp} > {curr.timestamp}"
        )
    values = curr.pixels.astype(np.int16) - prev.pixels.astype(np.int16)
    return DifferenceFrame(values, prev.timestamp, curr.timestamp)


def _crossings(values: np.ndarray, config: SimulatorConfig):
    """Row-major flat indices, polarities and multiplicities of threshold crossings."""
    flat = values.ravel()
    pos = flat > config.c_pos
    neg = flat < config.c_neg
    idx = np.flatnonzero(pos | neg)
    pol = np.where(pos[idx], 1, -1).astype(np.int8)
    if config.events_per_crossing == "magnitude":
        v = np.abs(flat[idx].astype(np.float64))
        thr = np.where(pol > 0, config.c_pos, -config.c_neg)
        counts = np.floor(v / thr).astype(np.int64)
    else:
        counts = None
    return idx, pol, counts


def events_from_indices(
    idx: np.ndarray,
    pol: np.ndarray,
    counts: np.ndarray | None,
    width: int,
    t: int,
) -> tuple[np.ndarray, ...]:
    """Expand sorted flat pixel indices into event columns at one timestamp."""
    if counts is not None:
        idx = np.repeat(idx, counts)
        pol = np.repeat(pol, counts)
    y, x = np.divmod(idx, width)
    return x, y, np.full(len(idx), t, dtype=np.int64), pol


def threshold_values(values: np.ndarray, config: SimulatorConfig, event_time: int) -> tuple[np.ndarray, ...]:
    """Event columns for a raw difference array; rows come out ordered by (y, x)."""
    idx, pol, counts = _crossings(values, config)
    return events_from_indices(idx, pol, counts, values.shape[1], event_time)


def threshold_events(diff: DifferenceFrame, config: SimulatorConfig, event_time: int) -> EventStream:
    """Emit +1 where ``diff > c_pos`` and -1 where ``diff < c_neg`` (strict)."""
    cols = threshold_values(diff.values, config, event_time)
    return EventStream((diff.width, diff.height), *cols)
