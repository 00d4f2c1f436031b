"""Optical flow backends.

``estimate_dense_flow`` is a coarse-to-fine Lucas-Kanade solver that evaluates
the 2x2 normal equations for every pixel with box-filtered structure tensors.
``estimate_sparse_flow`` runs the same pyramidal scheme per point, sampling a
square window around each point, and only touches the image region the points
occupy.

Pyramid levels are Gaussian: blur, then keep even pixels. A level-0
coordinate ``x`` maps to ``x / 2**l`` on level ``l`` and displacements scale by
``2**l``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.ndimage import correlate1d, uniform_filter

from .core import Frame, IncompatibleFramesError, check_compatible

# Minimum eigenvalue of the window-averaged structure tensor, in
# (gray levels / px)^2, below which a patch counts as flat.
MIN_EIGENVALUE = 1e-2
# Points per vectorised block in the sparse tracker (bounds memory use).
CHUNK = 16384
_BINOMIAL = np.array([1, 4, 6, 4, 1], np.float32) / 16
# Border handling names mapped to numpy.pad and scipy.ndimage modes.
_PAD_MODE = {"edge": "edge", "zero": "constant"}
_FILTER_MODE = {"edge": "nearest", "zero": "constant"}
# Per-iteration update (px) below which a tracked point counts as converged.
EPS = 0.01


@dataclass(frozen=True)
class FlowPreset:
    pyramid_levels: int
    iterations_per_level: int
    patch_radius: int

    def __post_init__(self):
        for name in ("pyramid_levels", "iterations_per_level", "patch_radius"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


LOW_QUALITY = FlowPreset(pyramid_levels=4, iterations_per_level=2, patch_radius=4)
HIGH_QUALITY = FlowPreset(pyramid_levels=5, iterations_per_level=8, patch_radius=6)
PRESETS = {"low_quality": LOW_QUALITY, "high_quality": HIGH_QUALITY}

PresetLike = Union[str, FlowPreset]


def get_preset(preset: PresetLike) -> FlowPreset:
    if isinstance(preset, FlowPreset):
        return preset
    try:
        return PRESETS[preset]
    except KeyError:
        raise ValueError(f"unknown flow preset {preset!r}; expected one of {sorted(PRESETS)}") from None


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement (pixels per frame interval) taking prev to curr."""

    du: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        du = np.asarray(self.du, dtype=np.float32)
        dv = np.asarray(self.dv, dtype=np.float32)
        if du.shape != dv.shape or du.ndim != 2:
            raise ValueError("du and dv must be 2-D arrays of equal shape")
        if not (np.isfinite(du).all() and np.isfinite(dv).all()):
            raise ValueError("flow contains non-finite displacements")
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "dv", dv)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        z = np.zeros((height, width), np.float32)
        return cls(z, z)

    @property
    def width(self) -> int:
        return self.du.shape[1]

    @property
    def height(self) -> int:
        return self.du.shape[0]


@dataclass(frozen=True, eq=False)
class SparseFlow:
    points: np.ndarray  # (N, 2) int, columns x, y
    displacements: np.ndarray  # (N, 2) float, columns du, dv
    status: np.ndarray  # (N,) bool, True = tracked

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        disp = np.asarray(self.displacements, dtype=np.float32).reshape(-1, 2)
        st = np.asarray(self.status, dtype=bool).reshape(-1)
        if not (len(pts) == len(disp) == len(st)):
            raise ValueError("points, displacements and status must have equal length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "displacements", disp)
        object.__setattr__(self, "status", st)

    def __len__(self) -> int:
        return len(self.points)


DenseFlowFn = Callable[[Frame, Frame, PresetLike], FlowField]


# -- image primitives -------------------------------------------------------

def downsample(img: np.ndarray, border: str = "edge") -> np.ndarray:
    """Blur with the 5-tap binomial kernel and keep even rows and columns."""
    mode = _FILTER_MODE[border]
    img = correlate1d(img, _BINOMIAL, axis=0, mode=mode)[::2]
    return correlate1d(img, _BINOMIAL, axis=1, mode=mode)[:, ::2]


def build_pyramid(img: np.ndarray, levels: int, min_size: int = 8, border: str = "edge") -> list[np.ndarray]:
    """Up to ``levels`` images; a level is only added if both sides stay >= ``min_size``.

    Solving on levels smaller than the patch makes the coarse estimate
    meaningless, so callers pass the patch width as ``min_size``.
    """
    pyr = [img]
    for _ in range(levels - 1):
        h, w = pyr[-1].shape
        if min((h + 1) // 2, (w + 1) // 2) < min_size:
            break
        pyr.append(downsample(pyr[-1], border))
    return pyr


def gradients(img: np.ndarray, border: str = "edge") -> tuple[np.ndarray, np.ndarray]:
    """Central differences; pixels beyond the border replicate it (or are zero)."""
    p = np.pad(img, 1, mode=_PAD_MODE[border])
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at fractional coordinates, clamping to the border."""
    h, w = img.shape
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = xs.astype(np.intp)
    y0 = ys.astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    flat = img.ravel()
    i00 = y0 * w + x0
    i01 = i00 + (x0 < w - 1)
    step = (y0 < h - 1) * w
    a = flat.take(i00)
    b = flat.take(i01)
    c = flat.take(i00 + step)
    d = flat.take(i01 + step)
    top = a + fx * (b - a)
    return top + fy * (c + fx * (d - c) - top)


def _upsample_flow(a: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear 2x upsampling of one flow component, scaled to the finer level."""
    hc, wc = a.shape
    h, w = shape

    def axis(n, nc):
        c = np.clip(np.arange(n, dtype=np.float32) / 2, 0, nc - 1)
        i0 = np.floor(c).astype(np.intp)
        return i0, np.minimum(i0 + 1, nc - 1), (c - i0).astype(np.float32)

    x0, x1, fx = axis(w, wc)
    y0, y1, fy = axis(h, hc)
    rows = a[:, x0] + fx * (a[:, x1] - a[:, x0])
    out = rows[y0] + fy[:, None] * (rows[y1] - rows[y0])
    return 2.0 * out


def _min_eigenvalue(sxx, sxy, syy):
    return 0.5 * (sxx + syy - np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy))


# -- dense ------------------------------------------------------------------

def dense_lk(img0: np.ndarray, img1: np.ndarray, preset: FlowPreset) -> tuple[np.ndarray, np.ndarray]:
    size = 2 * preset.patch_radius + 1
    pyr0 = build_pyramid(img0.astype(np.float32), preset.pyramid_levels, size)
    pyr1 = build_pyramid(img1.astype(np.float32), len(pyr0), size)
    r = float(preset.patch_radius)
    u = v = None
    for a, b in zip(reversed(pyr0), reversed(pyr1)):
        h, w = a.shape
        if u is None:
            u = np.zeros((h, w), np.float32)
            v = np.zeros((h, w), np.float32)
        else:
            u = _upsample_flow(u, (h, w))
            v = _upsample_flow(v, (h, w))
        gx, gy = gradients(a)
        sxx = uniform_filter(gx * gx, size, mode="nearest")
        sxy = uniform_filter(gx * gy, size, mode="nearest")
        syy = uniform_filter(gy * gy, size, mode="nearest")
        ok = _min_eigenvalue(sxx, sxy, syy) >= MIN_EIGENVALUE
        det = np.where(ok, sxx * syy - sxy * sxy, 1.0).astype(np.float32)
        gridx = np.arange(w, dtype=np.float32)[None, :]
        gridy = np.arange(h, dtype=np.float32)[:, None]
        for _ in range(preset.iterations_per_level):
            # Averaging the field over the patch keeps the per-pixel solves
            # consistent with their neighbours; without it the iteration
            # amplifies high-frequency flow errors.
            u = uniform_filter(u, size, mode="nearest")
            v = uniform_filter(v, size, mode="nearest")
            warped = bilinear_sample(b, gridx + u, gridy + v)
            it = warped - a
            bx = uniform_filter(gx * it, size, mode="nearest")
            by = uniform_filter(gy * it, size, mode="nearest")
            du = (sxy * by - syy * bx) / det
            dv = (sxy * bx - sxx * by) / det
            u += np.where(ok, np.clip(du, -r, r), 0.0).astype(np.float32)
            v += np.where(ok, np.clip(dv, -r, r), 0.0).astype(np.float32)
    u[~ok] = 0.0
    v[~ok] = 0.0
    return u, v


def estimate_dense_flow(prev: Frame, curr: Frame, preset: PresetLike = LOW_QUALITY) -> FlowField:
    """Per-pixel flow from ``prev`` to ``curr``: ``curr(x + d(x)) ~ prev(x)``.

    Patches whose structure tensor is (near-)singular get zero flow.
    """
    check_compatible(prev, curr)
    u, v = dense_lk(prev.pixels, curr.pixels, get_preset(preset))
    return FlowField(u, v)


# -- sparse -----------------------------------------------------------------

class _Level:
    """One pyramid level padded for whole-window gathers."""

    def __init__(self, img0, img1, radius, border="edge"):
        self.margin = m = radius + 2
        self.h, self.w = img0.shape
        gx, gy = gradients(img0, border)
        pad = _PAD_MODE[border]
        self.i0 = np.pad(img0, m, mode=pad).ravel()
        self.i1 = np.pad(img1, m, mode=pad).ravel()
        self.gx = np.pad(gx, m, mode=pad).ravel()
        self.gy = np.pad(gy, m, mode=pad).ravel()
        self.stride = self.w + 2 * m
        oy, ox = np.mgrid[-radius:radius + 1, -radius:radius + 1]
        self.koff = (oy * self.stride + ox).ravel()
        self.lo = float(radius)
        self.hi_x = float(self.stride - radius - 2)
        self.hi_y = float(self.h + 2 * m - radius - 2)

    def gather(self, flat, cx, cy):
        """Window samples around integer centres (no interpolation)."""
        idx = ((cy + self.margin) * self.stride + cx + self.margin)[:, None] + self.koff
        return flat.take(idx)

    def window(self, flat, cx, cy):
        """Bilinear samples of the square window centred at each (cx, cy)."""
        cx = np.clip(cx + self.margin, self.lo, self.hi_x)
        cy = np.clip(cy + self.margin, self.lo, self.hi_y)
        x0 = np.floor(cx)
        y0 = np.floor(cy)
        fx = (cx - x0).astype(np.float32)[:, None]
        fy = (cy - y0).astype(np.float32)[:, None]
        idx = (y0.astype(np.intp) * self.stride + x0.astype(np.intp))[:, None] + self.koff
        a = flat.take(idx)
        b = flat.take(idx + 1)
        c = flat.take(idx + self.stride)
        d = flat.take(idx + self.stride + 1)
        top = a + fx * (b - a)
        return top + fy * (c + fx * (d - c) - top)


def _track_block(levels, pts, preset):
    """Coarse-to-fine LK for integer ``pts`` (N, 2) in ROI coordinates.

    On level ``l`` only the distinct level pixels nearest to some point are
    solved; every pixel on the next finer level starts from twice its
    parent's displacement.
    """
    r = float(preset.patch_radius)
    d = None
    parent_of_point = None
    for lvl in reversed(range(len(levels))):
        lev = levels[lvl]
        cells = (pts + (1 << lvl >> 1)) >> lvl
        np.minimum(cells, [lev.w - 1, lev.h - 1], out=cells)
        keys = cells[:, 1] * (lev.w + 1) + cells[:, 0]
        _, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        cx = cells[first, 0]
        cy = cells[first, 1]
        if d is None:
            d = np.zeros((len(first), 2), np.float32)
        else:
            d = 2.0 * d[parent_of_point[first]]
        parent_of_point = inv.reshape(-1)

        tmpl = lev.gather(lev.i0, cx, cy)
        gx = lev.gather(lev.gx, cx, cy)
        gy = lev.gather(lev.gy, cx, cy)
        k = float(tmpl.shape[1])
        sxx = np.einsum("ij,ij->i", gx, gx) / k
        sxy = np.einsum("ij,ij->i", gx, gy) / k
        syy = np.einsum("ij,ij->i", gy, gy) / k
        ok = _min_eigenvalue(sxx, sxy, syy) >= MIN_EIGENVALUE
        det = np.where(ok, sxx * syy - sxy * sxy, 1.0)
        # Cells drop out of the active set once their update falls below EPS.
        act = np.flatnonzero(ok)
        tmpl, gx, gy = tmpl[act], gx[act], gy[act]
        sxx, sxy, syy, det = sxx[act], sxy[act], syy[act], det[act]
        fcx, fcy = cx[act].astype(np.float32), cy[act].astype(np.float32)
        for _ in range(preset.iterations_per_level):
            if len(act) == 0:
                break
            da = d[act]
            it = lev.window(lev.i1, fcx + da[:, 0], fcy + da[:, 1]) - tmpl
            bx = np.einsum("ij,ij->i", gx, it) / k
            by = np.einsum("ij,ij->i", gy, it) / k
            du = np.clip((sxy * by - syy * bx) / det, -r, r)
            dv = np.clip((sxy * bx - sxx * by) / det, -r, r)
            d[act, 0] += du
            d[act, 1] += dv
            moving = np.maximum(np.abs(du), np.abs(dv)) >= EPS
            if not moving.all():
                act = act[moving]
                tmpl, gx, gy = tmpl[moving], gx[moving], gy[moving]
                sxx, sxy, syy, det = sxx[moving], sxy[moving], syy[moving], det[moving]
                fcx, fcy = fcx[moving], fcy[moving]
    return d[parent_of_point], ok[parent_of_point]


def track_points(
    img0: np.ndarray,
    img1: np.ndarray,
    points: np.ndarray,
    preset: PresetLike = LOW_QUALITY,
    border: str = "edge",
):
    """Pyramidal LK at integer ``points`` (N, 2 as x, y) of two equal-size arrays.

    Returns ``(displacements, status)``. Only a bounding region around the
    points (aligned to the coarsest pyramid cell) is processed. ``border``
    is ``"edge"`` (replicate the outermost pixels, right for intensity
    images) or ``"zero"`` (right for change images, where nothing happens
    outside the sensor).
    """
    if border not in _PAD_MODE:
        raise ValueError(f"border must be one of {sorted(_PAD_MODE)}")
    preset = get_preset(preset)
    h, w = img0.shape
    points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    n = len(points)
    if n == 0:
        return np.zeros((0, 2), np.float32), np.zeros(0, bool)
    if points.min() < 0 or points[:, 0].max() >= w or points[:, 1].max() >= h:
        raise ValueError("points must lie inside the frame")

    cell = 2 ** (preset.pyramid_levels - 1)
    margin = (2 * preset.patch_radius + 2) * cell
    x_lo = max(0, (int(points[:, 0].min()) - margin) // cell * cell)
    y_lo = max(0, (int(points[:, 1].min()) - margin) // cell * cell)
    x_hi = min(w, int(points[:, 0].max()) + margin + 1)
    y_hi = min(h, int(points[:, 1].max()) + margin + 1)
    a = img0[y_lo:y_hi, x_lo:x_hi].astype(np.float32)
    b = img1[y_lo:y_hi, x_lo:x_hi].astype(np.float32)
    size = 2 * preset.patch_radius + 1
    pyr0 = build_pyramid(a, preset.pyramid_levels, size, border)
    pyr1 = build_pyramid(b, len(pyr0), size, border)
    levels = [_Level(l0, l1, preset.patch_radius, border) for l0, l1 in zip(pyr0, pyr1)]
    local = points - np.array([x_lo, y_lo])

    disp = np.empty((n, 2), np.float32)
    status = np.empty(n, bool)
    for start in range(0, n, CHUNK):
        sl = slice(start, start + CHUNK)
        disp[sl], status[sl] = _track_block(levels, local[sl], preset)

    max_disp = preset.patch_radius * 2 ** len(pyr0)
    dest = points + disp
    status &= np.isfinite(disp).all(axis=1)
    status &= np.abs(disp).max(axis=1) <= max_disp
    status &= (dest[:, 0] >= 0) & (dest[:, 0] <= w - 1) & (dest[:, 1] >= 0) & (dest[:, 1] <= h - 1)
    disp[~np.isfinite(disp)] = 0.0
    return disp, status


def forward_backward_error(img0, img1, points, disp, preset: PresetLike = LOW_QUALITY) -> np.ndarray:
    """Distance by which tracking ``img1 -> img0`` from each destination misses its start.

    Destinations are rounded to the pixel grid before tracking back, so a
    perfect track can still show up to ~0.7 px of error.
    """
    h, w = img0.shape
    points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(points) == 0:
        return np.zeros(0, np.float32)
    q = np.rint(points + disp).astype(np.int64)
    np.clip(q[:, 0], 0, w - 1, out=q[:, 0])
    np.clip(q[:, 1], 0, h - 1, out=q[:, 1])
    back, ok = track_points(img1, img0, q, preset)
    err = np.hypot(*(q + back - points).T).astype(np.float32)
    err[~ok] = np.inf
    return err


def estimate_sparse_flow(
    prev: Frame,
    curr: Frame,
    points,
    preset: PresetLike = LOW_QUALITY,
    max_fb_error: float | None = None,
) -> SparseFlow:
    """Track integer ``points`` from ``prev`` to ``curr``.

    Points on flat patches, with runaway solves or whose destination leaves
    the frame are flagged lost (``status`` False). With ``max_fb_error`` set,
    tracks whose forward-backward error exceeds it are flagged lost as well.
    """
    check_compatible(prev, curr)
    pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    if len(pts) and (pts.min() < 0 or pts[:, 0].max() >= prev.width or pts[:, 1].max() >= prev.height):
        raise IncompatibleFramesError("sparse flow points must lie inside the frame")
    disp, status = track_points(prev.pixels, curr.pixels, pts, preset)
    if max_fb_error is not None and status.any():
        fb = forward_backward_error(prev.pixels, curr.pixels, pts[status], disp[status], preset)
        status[np.flatnonzero(status)[fb > max_fb_error]] = False
    return SparseFlow(pts, disp, status)
