"""Frame ingestion and event/render output formats.

Binary event files are little-endian::

    header   magic b"EVS1" | width u16 | height u16 | count u64
    record   x u16 | y u16 | t u64 | p i8          (13 bytes, no padding)

Text event files hold one ``x,y,t,p`` line per event with ``p`` in {1, -1}.
"""

from __future__ import annotations

import glob
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import EventStream, Frame, SimulatorError
from .metrics import AccumulatedFrame

MAGIC = b"EVS1"
HEADER = struct.Struct("<4sHHQ")
RECORD = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<u8"), ("p", "i1")])
assert RECORD.itemsize == 13

# RGB per accumulated pixel class: none, positive, negative, both.
PALETTE = np.array(
    [
        [255, 255, 255],
        [0, 0, 255],
        [255, 0, 0],
        [0, 255, 0],
    ],
    dtype=np.uint8,
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".pgm", ".ppm", ".gif", ".webp")

PathLike = Union[str, os.PathLike]


class FrameSourceError(SimulatorError, ValueError):
    """An input image is missing, unreadable or inconsistent with the others."""


class EventFormatError(SimulatorError, ValueError):
    """An event file is malformed."""


# -- frames -----------------------------------------------------------------

def _natural_key(path: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", str(path))]


def expand_paths(spec: PathLike) -> list[Path]:
    """Resolve a directory, glob pattern or single file into sorted image paths.

    Numbered files sort numerically, so ``frame_2.png`` precedes ``frame_10.png``.
    """
    spec = str(spec)
    if os.path.isdir(spec):
        names = [os.path.join(spec, n) for n in os.listdir(spec) if n.lower().endswith(IMAGE_SUFFIXES)]
    elif glob.has_magic(spec):
        names = glob.glob(spec)
    else:
        names = [spec]
    return [Path(n) for n in sorted(names, key=_natural_key)]


@dataclass(frozen=True)
class FrameSource:
    """Ordered image files played back at ``fps``, optionally resized to ``resolution``."""

    paths: tuple[Path, ...]
    fps: float
    resolution: tuple[int, int] | None = None  # (width, height)

    def __post_init__(self):
        paths = tuple(Path(p) for p in self.paths)
        if not paths:
            raise FrameSourceError("frame source has no paths")
        if not self.fps > 0:
            raise FrameSourceError(f"fps must be positive, got {self.fps}")
        if self.resolution is not None:
            w, h = (int(v) for v in self.resolution)
            if w <= 0 or h <= 0:
                raise FrameSourceError(f"invalid target resolution {self.resolution}")
            object.__setattr__(self, "resolution", (w, h))
        object.__setattr__(self, "paths", paths)

    @classmethod
    def from_spec(cls, spec: PathLike, fps: float, resolution=None) -> "FrameSource":
        return cls(tuple(expand_paths(spec)), fps, resolution)

    def timestamps(self) -> list[int]:
        return frame_timestamps(len(self.paths), self.fps)


def frame_timestamps(n: int, fps: float) -> list[int]:
    """``round(k * 1e6 / fps)`` microseconds, rounding halves up."""
    return [int(np.floor(k * 1_000_000 / fps + 0.5)) for k in range(n)]


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Integer BT.601 luma ``(299 R + 587 G + 114 B + 500) // 1000``."""
    rgb = rgb.astype(np.uint32)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def read_gray(path: PathLike, resolution: tuple[int, int] | None = None) -> np.ndarray:
    """Decode one image file to a (height, width) uint8 array."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                gray = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("I;16", "I;16B", "I;16L", "I"):
                gray = (np.asarray(im).astype(np.uint32) >> 8).clip(0, 255).astype(np.uint8)
            else:
                gray = to_gray(np.asarray(im.convert("RGB")))
    except FileNotFoundError:
        raise FrameSourceError(f"{path}: file not found") from None
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FrameSourceError(f"{path}: cannot decode image ({exc})") from None
    if resolution is not None and (gray.shape[1], gray.shape[0]) != tuple(resolution):
        gray = np.asarray(Image.fromarray(gray).resize(tuple(resolution), Image.BILINEAR))
    return gray


def load_frames(source: FrameSource) -> list[Frame]:
    """Decode every image of ``source`` into timestamped grayscale frames."""
    times = source.timestamps()
    frames = []
    for path, t in zip(source.paths, times):
        gray = read_gray(path, source.resolution)
        if frames and gray.shape != frames[0].shape:
            raise FrameSourceError(
                f"{path}: resolution {gray.shape[1]}x{gray.shape[0]} differs from "
                f"{frames[0].width}x{frames[0].height}; pass a target resolution to resize"
            )
        frames.append(Frame(gray, t))
    return frames


def save_frames(frames: Sequence[Frame], directory: PathLike, prefix: str = "frame") -> list[Path]:
    """Write frames as zero-padded numbered PNG files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digits = max(4, len(str(len(frames) - 1)))
    paths = []
    for k, f in enumerate(frames):
        p = directory / f"{prefix}_{k:0{digits}d}.png"
        Image.fromarray(f.pixels).save(p)
        paths.append(p)
    return paths


# -- events -----------------------------------------------------------------

def write_events_text(stream: EventStream, path: PathLike) -> None:
    cols = np.column_stack([stream.x, stream.y, stream.t, stream.p]).astype(np.int64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if len(cols):
            np.savetxt(fh, cols, fmt="%d", delimiter=",")


def read_events_text(path: PathLike, resolution: tuple[int, int] | None = None) -> EventStream:
    """Parse an ``x,y,t,p`` file.

    Text files carry no resolution; without one it is taken as the bounding
    box of the events (1x1 for an empty file).
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    data = np.zeros((0, 4), np.int64)
    if text.strip():
        try:
            data = np.loadtxt(text.splitlines(), delimiter=",", dtype=np.int64, ndmin=2)
        except ValueError as exc:
            raise EventFormatError(f"{path}: malformed event line ({exc})") from None
    if data.shape[1] != 4:
        raise EventFormatError(f"{path}: expected 4 columns, found {data.shape[1]}")
    if data.size and data[:, :2].min() < 0:
        raise EventFormatError(f"{path}: negative event coordinate")
    x, y, t, p = data.T
    if resolution is None:
        resolution = (int(x.max()) + 1, int(y.max()) + 1) if len(x) else (1, 1)
    try:
        return EventStream.from_arrays(resolution, x, y, t, p, sort=False)
    except ValueError as exc:
        raise EventFormatError(f"{path}: {exc}") from None


def encode_events(stream: EventStream) -> bytes:
    rec = np.empty(len(stream), RECORD)
    rec["x"], rec["y"], rec["t"], rec["p"] = stream.x, stream.y, stream.t, stream.p
    return HEADER.pack(MAGIC, stream.width, stream.height, len(stream)) + rec.tobytes()


def decode_events(buf: bytes, source: str = "<bytes>") -> EventStream:
    if len(buf) < HEADER.size:
        raise EventFormatError(f"{source}: truncated header ({len(buf)} bytes)")
    magic, w, h, count = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise EventFormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    payload = len(buf) - HEADER.size
    if payload != count * RECORD.itemsize:
        raise EventFormatError(
            f"{source}: header announces {count} events ({count * RECORD.itemsize} bytes) "
            f"but payload has {payload} bytes"
        )
    rec = np.frombuffer(buf, RECORD, count=count, offset=HEADER.size)
    if count and rec["t"].max() > np.iinfo(np.int64).max:
        raise EventFormatError(f"{source}: timestamp out of range")
    try:
        return EventStream((w, h), rec["x"], rec["y"], rec["t"].astype(np.int64), rec["p"])
    except ValueError as exc:
        raise EventFormatError(f"{source}: {exc}") from None


def write_events_binary(stream: EventStream, path: PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_events(stream))


def read_events_binary(path: PathLike) -> EventStream:
    with open(path, "rb") as fh:
        return decode_events(fh.read(), str(path))


def is_text_path(path: PathLike) -> bool:
    return str(path).lower().endswith((".txt", ".csv"))


def write_events(stream: EventStream, path: PathLike) -> None:
    """Text for ``.txt``/``.csv`` paths, binary otherwise."""
    if is_text_path(path):
        write_events_text(stream, path)
    else:
        write_events_binary(stream, path)


def read_events(path: PathLike, resolution: tuple[int, int] | None = None) -> EventStream:
    if is_text_path(path):
        return read_events_text(path, resolution)
    return read_events_binary(path)


# -- rendering --------------------------------------------------------------

def render_rgb(frame: AccumulatedFrame) -> np.ndarray:
    return PALETTE[frame.classes]


def render_accumulated(frame: AccumulatedFrame, path: PathLike) -> None:
    """Save the palette image (none white, positive blue, negative red, both green)."""
    Image.fromarray(render_rgb(frame)).save(path)
