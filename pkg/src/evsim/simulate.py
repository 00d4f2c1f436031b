"""Frame-to-event pipelines.

Every method turns the interval between two input frames into a chain of
``n_interp + 1`` difference frames. Difference frame ``k`` is stamped with the
end of its sub-interval, ``t_prev + ceil(k * (t_curr - t_prev) / (n_interp + 1))``,
so all events of an interval fall in ``(t_prev, t_curr]``.

The sparse and difference-interpolation pipelines never materialise the
intermediate frames: they only differ from a reference frame at a handful of
pixels, so they are kept as sorted ``(flat index, value)`` pairs.
"""

from __future__ import annotations

import numpy as np

from .core import (
    ConfigError,
    EventStream,
    Frame,
    IncompatibleFramesError,
    SimulatorConfig,
    check_compatible,
    events_from_indices,
    threshold_values,
)
from .flow import (
    DenseFlowFn,
    FlowField,
    bilinear_sample,
    estimate_dense_flow,
    estimate_sparse_flow,
    get_preset,
    track_points,
)

# Forward-backward tracking error (px) above which a sparse track is dropped.
# Rejected pixels are not interpolated; their whole change lands on the last
# link of the chain, as with plain differencing.
SPARSE_MAX_FB_ERROR = 2.0


def subframe_times(t_prev: int, t_curr: int, n_interp: int) -> list[int]:
    """End timestamps of the ``n_interp + 1`` sub-intervals of ``(t_prev, t_curr]``."""
    span = t_curr - t_prev
    m = n_interp + 1
    return [t_prev + (k * span + m - 1) // m for k in range(1, m + 1)]


def _chain_indices(config: SimulatorConfig) -> range:
    """Which sub-interval indices (1-based) of the chain emit events."""
    n = config.n_interp
    if n == 0 or config.include_endpoints:
        return range(1, n + 2)
    return range(2, n + 1)


def _stream(shape, cols_list) -> EventStream:
    h, w = shape
    if not cols_list:
        return EventStream.empty((w, h))
    cols = [np.concatenate([c[i] for c in cols_list]) for i in range(4)]
    # Each chunk is already (y, x)-ordered at a single timestamp; a sort is
    # only needed when short intervals make two chunks share a timestamp.
    ends = [(c[2][0], c[2][-1]) for c in cols_list if len(c[2])]
    ordered = all(a[1] < b[0] for a, b in zip(ends, ends[1:]))
    return EventStream.from_arrays((w, h), *cols, sort=not ordered)


def _sparse_events(idx, values, config: SimulatorConfig, width: int, t: int):
    """Threshold values living at sorted flat pixel indices."""
    pos = values > config.c_pos
    neg = values < config.c_neg
    keep = pos | neg
    idx = idx[keep]
    pol = np.where(pos[keep], 1, -1).astype(np.int8)
    counts = None
    if config.events_per_crossing == "magnitude":
        mag = np.abs(values[keep].astype(np.float64))
        counts = np.floor(mag / np.where(pol > 0, config.c_pos, -config.c_neg)).astype(np.int64)
    return events_from_indices(idx, pol, counts, width, t)


# -- difference only --------------------------------------------------------

def simulate_difference_only(prev: Frame, curr: Frame, config: SimulatorConfig) -> EventStream:
    """Threshold the plain difference frame; events carry ``curr.timestamp``."""
    _check_pair(prev, curr)
    d = curr.pixels.astype(np.int16) - prev.pixels.astype(np.int16)
    return _stream(d.shape, [threshold_values(d, config, curr.timestamp)])


def _check_pair(prev: Frame, curr: Frame) -> None:
    check_compatible(prev, curr)
    if curr.timestamp <= prev.timestamp:
        raise IncompatibleFramesError(
            f"timestamps must increase strictly: {prev.timestamp} -> {curr.timestamp}"
        )


# -- dense ------------------------------------------------------------------

def interpolate_frames(prev: Frame, curr: Frame, flow: FlowField, n: int) -> list[Frame]:
    """``n`` intermediate frames by two-sided backward bilinear warping.

    Frame ``k`` (``a = k / (n + 1)``) blends ``prev`` sampled at ``x - a*d(x)``
    and ``curr`` sampled at ``x + (1 - a)*d(x)`` with weights ``1 - a`` and
    ``a``. Samples outside the image clamp to the border.
    """
    check_compatible(prev, curr)
    if (flow.height, flow.width) != prev.shape:
        raise IncompatibleFramesError("flow field and frames differ in size")
    if n <= 0:
        return []
    h, w = prev.shape
    p = prev.pixels.astype(np.float64)
    c = curr.pixels.astype(np.float64)
    gx = np.arange(w, dtype=np.float64)[None, :]
    gy = np.arange(h, dtype=np.float64)[:, None]
    du = flow.du.astype(np.float64)
    dv = flow.dv.astype(np.float64)
    still = not (du.any() or dv.any())
    times = subframe_times(prev.timestamp, curr.timestamp, n)
    out = []
    for k in range(1, n + 1):
        a = k / (n + 1)
        if still:
            sp, sc = p, c
        else:
            sp = bilinear_sample(p, gx - a * du, gy - a * dv)
            sc = bilinear_sample(c, gx + (1 - a) * du, gy + (1 - a) * dv)
        blend = (1 - a) * sp + a * sc
        out.append(Frame(np.clip(np.rint(blend), 0, 255).astype(np.uint8), times[k - 1]))
    return out


def chain_events(frames: list[np.ndarray], times: list[int], config: SimulatorConfig, shape) -> EventStream:
    """Threshold ``frames[k] - frames[k-1]`` at ``times[k-1]`` for the emitting indices."""
    cols = []
    for k in _chain_indices(config):
        d = frames[k].astype(np.int16) - frames[k - 1].astype(np.int16)
        cols.append(threshold_values(d, config, times[k - 1]))
    return _stream(shape, cols)


def simulate_dense(
    prev: Frame,
    curr: Frame,
    config: SimulatorConfig,
    dense_flow: DenseFlowFn = estimate_dense_flow,
) -> EventStream:
    _check_pair(prev, curr)
    n = config.n_interp
    times = subframe_times(prev.timestamp, curr.timestamp, n)
    if n == 0:
        return chain_events([prev.pixels, curr.pixels], times, config, prev.shape)
    flow = dense_flow(prev, curr, config.flow_preset)
    mids = interpolate_frames(prev, curr, flow, n)
    frames = [prev.pixels] + [m.pixels for m in mids] + [curr.pixels]
    return chain_events(frames, times, config, prev.shape)


# -- sparse -----------------------------------------------------------------

def _splat(src_idx, dest_xy, values, priority, width, height):
    """Sorted unique destination indices and values; highest priority wins a pixel."""
    dx = np.rint(dest_xy[:, 0]).astype(np.int64)
    dy = np.rint(dest_xy[:, 1]).astype(np.int64)
    inside = (dx >= 0) & (dx < width) & (dy >= 0) & (dy < height)
    dest = (dy * width + dx)[inside]
    values = values[inside]
    priority = priority[inside]
    src_idx = src_idx[inside]
    if len(dest) == 0:
        return dest, values
    order = np.lexsort((src_idx, -priority, dest))
    dest = dest[order]
    first = np.ones(len(dest), bool)
    first[1:] = dest[1:] != dest[:-1]
    return dest[first], values[order][first]


def _lookup(idx, vals, query, base):
    """Values of a sparse overlay (``idx``, ``vals``) over ``base`` at ``query``."""
    out = base[query].astype(np.int16)
    if len(idx):
        pos = np.searchsorted(idx, query)
        pos_c = np.minimum(pos, len(idx) - 1)
        hit = idx[pos_c] == query
        out[hit] = vals[pos_c[hit]]
    return out


def simulate_sparse(prev: Frame, curr: Frame, config: SimulatorConfig) -> EventStream:
    """Interpolate only pixels whose intensity changed by more than the selection threshold.

    Selected pixels are tracked with pyramidal LK (tracks failing the
    forward-backward check are dropped) and their ``prev`` intensity is
    splatted along the track into copies of ``prev``; colliding tracks keep the
    value with the largest absolute change against ``prev`` at that pixel.
    """
    _check_pair(prev, curr)
    n = config.n_interp
    h, w = prev.shape
    times = subframe_times(prev.timestamp, curr.timestamp, n)
    base = prev.pixels.ravel().astype(np.int16)
    d = curr.pixels.astype(np.int16) - prev.pixels.astype(np.int16)
    if n == 0:
        return _stream((h, w), [threshold_values(d, config, times[0])])

    sel = np.flatnonzero(np.abs(d.ravel()) > config.effective_selection_threshold)
    overlays = [(np.zeros(0, np.int64), np.zeros(0, np.int16))]  # i_0 = prev
    if len(sel):
        pts = np.column_stack((sel % w, sel // w))
        flow = estimate_sparse_flow(prev, curr, pts, config.flow_preset, max_fb_error=SPARSE_MAX_FB_ERROR)
        ok = flow.status
        src, pts, disp = sel[ok], pts[ok], flow.displacements[ok].astype(np.float64)
        vals = base[src]
        for k in range(1, n + 1):
            a = k / (n + 1)
            dest = pts + a * disp
            # Priority needs the destination's prev value, so round first.
            di = np.rint(dest).astype(np.int64)
            di[:, 0] = np.clip(di[:, 0], 0, w - 1)
            di[:, 1] = np.clip(di[:, 1], 0, h - 1)
            change = np.abs(vals - base[di[:, 1] * w + di[:, 0]])
            overlays.append(_splat(src, dest, vals, change, w, h))
    else:
        overlays += overlays * n

    cols = []
    for k in _chain_indices(config):
        t = times[k - 1]
        if k <= n:
            (ia, va), (ib, vb) = overlays[k - 1], overlays[k]
            q = np.union1d(ia, ib)
            diff = _lookup(ib, vb, q, base) - _lookup(ia, va, q, base)
            cols.append(_sparse_events(q, diff, config, w, t))
        else:
            # Last link: curr - i_n equals d except where i_n was overwritten.
            ia, va = overlays[n]
            dd = d.ravel().copy()
            if len(ia):
                dd[ia] = curr.pixels.ravel()[ia].astype(np.int16) - va
            cols.append(threshold_values(dd.reshape(h, w), config, t))
    return _stream((h, w), cols)


# -- difference interpolation -----------------------------------------------

def _crossing_pixels(d: np.ndarray, config: SimulatorConfig) -> np.ndarray:
    flat = d.ravel()
    return np.flatnonzero((flat > config.c_pos) | (flat < config.c_neg))


def difference_interp_events(
    d1: np.ndarray,
    d2: np.ndarray,
    t1: int,
    t2: int,
    config: SimulatorConfig,
    d1_crossings: np.ndarray | None = None,
) -> EventStream:
    """Events for ``(t1, t2]`` from two signed difference frames.

    Only pixels of ``d1`` beyond a threshold can emit, so just those are
    tracked from ``|d1|`` to ``|d2|`` and carried, with their signed value,
    ``k / (n + 1)`` of the way along their track. Tracking treats everything
    outside the sensor as zero change. The interpolated frames are
    thresholded directly; ``d2`` itself closes the chain at ``t2`` unless
    endpoints are excluded.
    """
    h, w = d2.shape
    n = config.n_interp
    times = subframe_times(t1, t2, n)
    cols = []
    if n > 0:
        src = _crossing_pixels(d1, config) if d1_crossings is None else d1_crossings
        if len(src):
            pts = np.column_stack((src % w, src // w))
            disp, ok = track_points(np.abs(d1), np.abs(d2), pts, get_preset(config.flow_preset), border="zero")
            disp = np.where(ok[:, None], disp, 0.0).astype(np.float64)
            vals = d1.ravel()[src]
            mag = np.abs(vals)
            for k in range(1, n + 1):
                a = k / (n + 1)
                idx, v = _splat(src, pts + a * disp, vals, mag, w, h)
                cols.append(_sparse_events(idx, v, config, w, times[k - 1]))
    if n == 0 or config.include_endpoints:
        cols.append(threshold_values(d2, config, t2))
    return _stream((h, w), cols)


def simulate_difference(f0: Frame, f1: Frame, f2: Frame, config: SimulatorConfig) -> EventStream:
    """Events for ``(f1.timestamp, f2.timestamp]`` by interpolating difference frames."""
    _check_pair(f0, f1)
    _check_pair(f1, f2)
    d1 = f1.pixels.astype(np.int16) - f0.pixels.astype(np.int16)
    d2 = f2.pixels.astype(np.int16) - f1.pixels.astype(np.int16)
    return difference_interp_events(d1, d2, f1.timestamp, f2.timestamp, config)


# -- streaming --------------------------------------------------------------

class Simulator:
    """Stateful frame-by-frame simulator.

    >>> sim = Simulator(SimulatorConfig.for_method("dense"))
    >>> for frame in frames:            # doctest: +SKIP
    ...     events = sim.push_frame(frame)
    """

    def __init__(self, config: SimulatorConfig, dense_flow: DenseFlowFn = estimate_dense_flow):
        if not isinstance(config, SimulatorConfig):
            raise ConfigError("config must be a SimulatorConfig")
        self.config = config
        self.dense_flow = dense_flow
        self.reset()

    def reset(self) -> None:
        self._prev: Frame | None = None
        self._d1: np.ndarray | None = None
        self._d1_crossings: np.ndarray | None = None

    @property
    def warmed_up(self) -> bool:
        if self.config.method == "difference_interp":
            return self._d1 is not None
        return self._prev is not None

    def push_frame(self, frame: Frame) -> EventStream:
        """Feed the next frame; returns the events of the interval it closes."""
        prev = self._prev
        if prev is None:
            self._prev = frame
            return EventStream.empty((frame.width, frame.height))
        _check_pair(prev, frame)

        method = self.config.method
        if method == "difference_only":
            out = simulate_difference_only(prev, frame, self.config)
        elif method == "dense":
            out = simulate_dense(prev, frame, self.config, self.dense_flow)
        elif method == "sparse":
            out = simulate_sparse(prev, frame, self.config)
        else:
            d2 = frame.pixels.astype(np.int16) - prev.pixels.astype(np.int16)
            if self._d1 is None:
                out = EventStream.empty((frame.width, frame.height))
            else:
                out = difference_interp_events(
                    self._d1, d2, prev.timestamp, frame.timestamp, self.config, self._d1_crossings
                )
            self._d1 = d2
            self._d1_crossings = _crossing_pixels(d2, self.config)
        self._prev = frame
        return out
