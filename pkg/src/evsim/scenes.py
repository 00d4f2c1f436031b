"""Synthetic frame sequences with known motion.

Each generator returns a :class:`Scene` whose ``positions`` hold the ground
truth object centre (x, y) for every frame, so tests can compare simulated
events against the construction parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import Frame

SCENES = ("square", "ball", "dot", "panning")


@dataclass
class Scene:
    name: str
    frames: list[Frame]
    positions: np.ndarray  # (n_frames, 2) object centre, x then y
    fps: float

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames[0].width, self.frames[0].height


def frame_times(n: int, fps: float) -> list[int]:
    """Microsecond timestamps ``round(k * 1e6 / fps)``."""
    return [int(np.floor(k * 1_000_000 / fps + 0.5)) for k in range(n)]


def texture(width: int, height: int, seed: int = 0, sigma: float = 2.0, lo: float = 0.0, hi: float = 255.0) -> np.ndarray:
    """Smoothed Gaussian noise rescaled to ``[lo, hi]`` (float64)."""
    rng = np.random.default_rng(seed)
    t = gaussian_filter(rng.standard_normal((height, width)), sigma)
    t = (t - t.min()) / (t.max() - t.min())
    return lo + t * (hi - lo)


def _disk(canvas: np.ndarray, cx: float, cy: float, radius: float, value: float) -> None:
    h, w = canvas.shape
    x0, x1 = max(0, int(np.floor(cx - radius))), min(w, int(np.ceil(cx + radius)) + 1)
    y0, y1 = max(0, int(np.floor(cy - radius))), min(h, int(np.ceil(cy + radius)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
    canvas[y0:y1, x0:x1][inside] = value


def _to_frames(images, fps) -> list[Frame]:
    times = frame_times(len(images), fps)
    return [Frame(np.clip(np.rint(im), 0, 255).astype(np.uint8), t) for im, t in zip(images, times)]


def translating_square(
    width: int = 64,
    height: int = 64,
    n_frames: int = 2,
    size: int = 8,
    velocity: tuple[float, float] = (2, 0),
    start: tuple[int, int] | None = None,
    foreground: int = 255,
    background: int = 0,
    fps: float = 20.0,
) -> Scene:
    """Bright axis-aligned square on a flat background, moving by whole pixels."""
    if start is None:
        start = (width // 4, height // 2 - size // 2)
    images, pos = [], []
    for k in range(n_frames):
        x = int(round(start[0] + k * velocity[0]))
        y = int(round(start[1] + k * velocity[1]))
        im = np.full((height, width), float(background))
        im[max(0, y):max(0, y + size), max(0, x):max(0, x + size)] = foreground
        images.append(im)
        pos.append((x + (size - 1) / 2, y + (size - 1) / 2))
    return Scene("square", _to_frames(images, fps), np.array(pos), fps)


def moving_ball(
    width: int = 1280,
    height: int = 720,
    n_frames: int = 10,
    radius: float = 12.0,
    velocity: tuple[float, float] = (8.0, -3.0),
    start: tuple[float, float] | None = None,
    foreground: int = 235,
    textured: bool = True,
    seed: int = 0,
    fps: float = 150.0,
) -> Scene:
    """Single ball at constant velocity in front of a static background.

    This is the low events-per-frame regime: only pixels swept by the ball
    change between frames.
    """
    if start is None:
        start = (width * 0.2, height * 0.6)
    if textured:
        bg = texture(width, height, seed=seed, sigma=3.0, lo=40, hi=140)
    else:
        bg = np.full((height, width), 40.0)
    images, pos = [], []
    for k in range(n_frames):
        cx = start[0] + k * velocity[0]
        cy = start[1] + k * velocity[1]
        im = bg.copy()
        _disk(im, cx, cy, radius, foreground)
        images.append(im)
        pos.append((cx, cy))
    return Scene("ball", _to_frames(images, fps), np.array(pos), fps)


def moving_dot(
    width: int = 640,
    height: int = 480,
    n_frames: int = 3,
    diameter: int = 5,
    velocity: tuple[float, float] = (12.0, 0.0),
    start: tuple[int, int] | None = None,
    foreground: int = 255,
    background: int = 0,
    fps: float = 20.0,
    wrap: bool = False,
) -> Scene:
    """Small bright dot on a black background moving by whole pixels.

    With ``wrap`` the dot re-enters on the opposite side once it would leave
    the frame (keeping a ``diameter`` margin), so long sequences stay in view.
    Only intervals without a wrap have constant velocity.
    """
    if start is None:
        start = (40, height // 2)
    margin = diameter
    images, pos = [], []
    for k in range(n_frames):
        cx = int(round(start[0] + k * velocity[0]))
        cy = int(round(start[1] + k * velocity[1]))
        if wrap:
            cx = margin + (cx - margin) % (width - 2 * margin)
            cy = margin + (cy - margin) % (height - 2 * margin)
        im = np.full((height, width), float(background))
        _disk(im, cx, cy, diameter / 2.0, foreground)
        images.append(im)
        pos.append((cx, cy))
    return Scene("dot", _to_frames(images, fps), np.array(pos, dtype=float), fps)


def panning_texture(
    width: int = 640,
    height: int = 480,
    n_frames: int = 10,
    velocity: tuple[int, int] = (3, 1),
    seed: int = 0,
    fps: float = 20.0,
) -> Scene:
    """Full-frame texture translating by whole pixels each frame.

    This is the high events-per-frame regime: nearly every pixel changes.
    """
    vx, vy = int(velocity[0]), int(velocity[1])
    pad_x = abs(vx) * n_frames + 1
    pad_y = abs(vy) * n_frames + 1
    big = texture(width + pad_x, height + pad_y, seed=seed, sigma=1.5)
    ox = pad_x - 1 if vx > 0 else 0
    oy = pad_y - 1 if vy > 0 else 0
    images, pos = [], []
    for k in range(n_frames):
        # Content moves by +v, so the crop window moves by -v.
        x = ox - k * vx
        y = oy - k * vy
        images.append(big[y:y + height, x:x + width])
        pos.append((k * vx, k * vy))
    return Scene("panning", _to_frames(images, fps), np.array(pos, dtype=float), fps)


def make_scene(name: str, **kwargs) -> Scene:
    factories = {
        "square": translating_square,
        "ball": moving_ball,
        "dot": moving_dot,
        "panning": panning_texture,
    }
    if name not in factories:
        raise ValueError(f"unknown scene {name!r}; expected one of {SCENES}")
    return factories[name](**kwargs)
