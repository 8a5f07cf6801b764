"""Binary canvas rendering, morphology and the geometric transform battery.

Canvases are 2-D uint8 arrays with values in {0, 1} (1 = ink). Everything
here is deterministic: line drawing uses integer midpoint stepping on
rounded endpoints, resampling is nearest-neighbour, and the augmentation
battery is a fixed ordered list of 30 transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .sketch_io import Sketch

DILATION_RADIUS = 2  # 5x5 square structuring element


def blank_canvas(side: int) -> np.ndarray:
    if side <= 0:
        raise ValueError(f"canvas side must be positive, got {side}")
    return np.zeros((side, side), dtype=np.uint8)


def check_canvas(canvas: np.ndarray) -> np.ndarray:
    """Validate dtype/shape/values; returns the array unchanged."""
    canvas = np.asarray(canvas)
    if canvas.ndim != 2 or canvas.shape[0] == 0 or canvas.shape[1] == 0:
        raise ValueError(f"canvas must be a non-empty 2-D array, got shape {canvas.shape}")
    if canvas.dtype != np.uint8:
        raise ValueError(f"canvas dtype must be uint8, got {canvas.dtype}")
    bad = (canvas > 1).any()
    if bad:
        raise ValueError("canvas pixels must be 0 or 1")
    return canvas


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def draw_segment(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> None:
    """Set the pixels of the midpoint (Bresenham) line from (x0,y0) to (x1,y1)."""
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        canvas[y, x] = 1
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy


def draw_stroke(canvas: np.ndarray, sketch: Sketch, stroke_index: int) -> None:
    """Draw one stroke onto ``canvas`` using the standard sketch scaling:
    the source extent is scaled uniformly (aspect preserved) into the canvas
    and centered, and each polyline segment is drawn one pixel wide."""
    side = canvas.shape[0]
    w, h = sketch.extent
    scale = side / max(w, h)
    ox = (side - w * scale) / 2.0
    oy = (side - h * scale) / 2.0
    top = side - 1

    def to_px(p) -> tuple[int, int]:
        px = min(max(_round_half_up(p[0] * scale + ox), 0), top)
        py = min(max(_round_half_up(p[1] * scale + oy), 0), top)
        return px, py

    pts = [to_px(p) for p in sketch.strokes[stroke_index]]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if (x0, y0) == (x1, y1):
            canvas[y0, x0] = 1
            continue
        draw_segment(canvas, x0, y0, x1, y1)


def rasterize(sketch: Sketch, prefix_len: int, side: int) -> np.ndarray:
    """Render the first ``prefix_len`` strokes onto a ``side`` x ``side``
    canvas; ``prefix_len`` 0 yields a blank canvas."""
    if not (0 <= prefix_len <= sketch.n_strokes):
        raise ValueError(
            f"prefix_len {prefix_len} out of range 0..{sketch.n_strokes} "
            f"for sketch {sketch.id!r}"
        )
    canvas = blank_canvas(side)
    for i in range(prefix_len):
        draw_stroke(canvas, sketch, i)
    return canvas


def dilate(canvas: np.ndarray, radius: int = DILATION_RADIUS) -> np.ndarray:
    """Morphological dilation by a (2*radius+1)^2 square, edge-clipped."""
    check_canvas(canvas)
    h, w = canvas.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=np.uint8)
    padded[radius:radius + h, radius:radius + w] = canvas
    out = np.zeros_like(canvas)
    for dr in range(2 * radius + 1):
        for dc in range(2 * radius + 1):
            np.bitwise_or(out, padded[dr:dr + h, dc:dc + w], out=out)
    return out


# --- geometric transforms ---------------------------------------------------


@dataclass(frozen=True)
class Transform:
    """One battery member. ``kind`` selects which parameter is meaningful."""

    kind: str  # identity | mirror | rotate | shift | zoom
    degrees: float = 0.0
    shift_px: tuple[int, int] = (0, 0)  # (dx, dy), +x right, +y down
    zoom_percent: float = 0.0

    def describe(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "rotate":
            d["degrees"] = self.degrees
        elif self.kind == "shift":
            d["dx"], d["dy"] = self.shift_px
        elif self.kind == "zoom":
            d["percent"] = self.zoom_percent
        return d


def mirror(canvas: np.ndarray) -> np.ndarray:
    """Exact column reversal (mirror across the vertical axis)."""
    return np.ascontiguousarray(canvas[:, ::-1])


def shift(canvas: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer translation; vacated area is 0, shifted-out ink is discarded."""
    h, w = canvas.shape
    out = np.zeros_like(canvas)
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    if src_r.start < src_r.stop and src_c.start < src_c.stop:
        out[dst_r, dst_c] = canvas[src_r, src_c]
    return out


def _nearest_sample(canvas: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> np.ndarray:
    h, w = canvas.shape
    ix = np.floor(src_x + 0.5).astype(np.int64)
    iy = np.floor(src_y + 0.5).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.zeros((h, w), dtype=np.uint8)
    out[valid] = canvas[iy[valid], ix[valid]]
    return out


def rotate(canvas: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the canvas center, nearest-neighbour resampling.

    Implemented as an inverse map: each output pixel pulls from the source
    location obtained by rotating its offset from the center by -degrees.
    """
    h, w = canvas.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w]
    x = xx - cx
    y = yy - cy
    src_x = cos_t * x + sin_t * y + cx
    src_y = -sin_t * x + cos_t * y + cy
    return _nearest_sample(canvas, src_x, src_y)


def zoom(canvas: np.ndarray, percent: float) -> np.ndarray:
    """Central scale by (1 + percent/100); output keeps the original size."""
    factor = 1.0 + percent / 100.0
    if factor <= 0:
        raise ValueError(f"zoom percent {percent} collapses the canvas")
    h, w = canvas.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    src_x = (xx - cx) / factor + cx
    src_y = (yy - cy) / factor + cy
    return _nearest_sample(canvas, src_x, src_y)


def apply_transform(canvas: np.ndarray, t: Transform) -> np.ndarray:
    if t.kind == "identity":
        return canvas.copy()
    if t.kind == "mirror":
        return mirror(canvas)
    if t.kind == "rotate":
        return rotate(canvas, t.degrees)
    if t.kind == "shift":
        return shift(canvas, *t.shift_px)
    if t.kind == "zoom":
        return zoom(canvas, t.zoom_percent)
    raise ValueError(f"unknown transform kind {t.kind!r}")


def standard_battery() -> tuple[Transform, ...]:
    """The fixed, ordered 30-transform battery applied to dilated canvases.

    Members: the identity, the vertical-axis mirror, rotations of +-5 and
    +-15 degrees, the 16 combined shifts over {+-5, +-15} pixels in both
    axes, the 4 axis-aligned +-5 pixel shifts, and central zooms of +-3 and
    +-7 percent of the canvas height.
    """
    battery: list[Transform] = [Transform("identity"), Transform("mirror")]
    for deg in (-15.0, -5.0, 5.0, 15.0):
        battery.append(Transform("rotate", degrees=deg))
    for dx in (-15, -5, 5, 15):
        for dy in (-15, -5, 5, 15):
            battery.append(Transform("shift", shift_px=(dx, dy)))
    for dx, dy in ((-5, 0), (5, 0), (0, -5), (0, 5)):
        battery.append(Transform("shift", shift_px=(dx, dy)))
    for pct in (-7.0, -3.0, 3.0, 7.0):
        battery.append(Transform("zoom", zoom_percent=pct))
    assert len(battery) == 30
    return tuple(battery)


BATTERIES: dict[str, tuple[Transform, ...]] = {"std30": standard_battery()}


def augment(canvas: np.ndarray, battery: tuple[Transform, ...] | None = None) -> list[np.ndarray]:
    """Apply the battery (default: the standard 30) to one dilated canvas."""
    if battery is None:
        battery = BATTERIES["std30"]
    return [apply_transform(canvas, t) for t in battery]


def battery_manifest(battery: tuple[Transform, ...] | None = None) -> list[dict]:
    """Machine-readable descriptors of the battery, in application order."""
    if battery is None:
        battery = BATTERIES["std30"]
    return [dict(index=i, **t.describe()) for i, t in enumerate(battery)]


# --- PGM debug dump ---------------------------------------------------------


def write_pgm(canvas: np.ndarray, path: str | Path) -> None:
    """Binary PGM (P5, maxval 255): ink pixels black (0) on white (255)."""
    check_canvas(canvas)
    h, w = canvas.shape
    data = ((1 - canvas) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a P5 PGM written by :func:`write_pgm` back into a binary canvas."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise DataError(f"{path}: not a P5 PGM file")
    try:
        w, h = (int(v) for v in parts[1].split())
        maxval = int(parts[2])
    except ValueError as exc:
        raise DataError(f"{path}: malformed PGM header") from exc
    pixels = np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w)
    return (pixels < (maxval + 1) // 2).astype(np.uint8)
