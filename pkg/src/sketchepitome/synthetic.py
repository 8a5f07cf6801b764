"""Procedural demo dataset: five shape categories with controlled jitter.

Each generator draws in a deliberate temporal order. The circle category
puts its dominant closed contour in the very first stroke and only adds
small decorations afterwards, while the star is drawn edge by edge, so the
two sit at opposite ends of the stroke-sparsity spectrum. Generation is
fully deterministic under the seed.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .sketch_io import Dataset, Sketch, serialize_sketch, stable_rng

EXTENT = 800.0
CATEGORIES = ("circle", "cross", "square", "star", "zigzag")


def _interp(p, q, k):
    """k points from p to q inclusive."""
    return [
        (p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t)
        for t in np.linspace(0.0, 1.0, k)
    ]


def _chain(vertices, per_edge=4):
    pts = [vertices[0]]
    for p, q in zip(vertices, vertices[1:]):
        pts.extend(_interp(p, q, per_edge)[1:])
    return pts


def _place(strokes, rng):
    """Rotate/scale/translate unit-geometry strokes into the canvas and add
    per-point jitter; points are clamped to the extent."""
    cx = 400.0 + rng.uniform(-50, 50)
    cy = 400.0 + rng.uniform(-50, 50)
    scale = 280.0 * rng.uniform(0.8, 1.05)
    rot = rng.uniform(-0.12, 0.12)
    cos_r, sin_r = math.cos(rot), math.sin(rot)
    placed = []
    for stroke in strokes:
        pts = []
        for x, y in stroke:
            rx = cos_r * x - sin_r * y
            ry = sin_r * x + cos_r * y
            px = cx + scale * rx + rng.normal(0.0, 6.0)
            py = cy + scale * ry + rng.normal(0.0, 6.0)
            pts.append(
                (min(max(px, 0.0), EXTENT), min(max(py, 0.0), EXTENT))
            )
        placed.append(tuple(pts))
    return tuple(placed)


def _tick(rng, reach=0.4, length=0.12):
    """A short 3-point decoration stroke somewhere near the middle."""
    ang = rng.uniform(0.0, 2 * math.pi)
    r = rng.uniform(0.0, reach)
    cx, cy = r * math.cos(ang), r * math.sin(ang)
    d = rng.uniform(0.0, 2 * math.pi)
    dx, dy = length * math.cos(d), length * math.sin(d)
    return _interp((cx - dx, cy - dy), (cx + dx, cy + dy), 3)


def _circle_strokes(rng):
    angles = np.linspace(0.0, 2 * math.pi, 25)
    contour = [
        (math.cos(a) * (1.0 + rng.normal(0, 0.02)), math.sin(a) * (1.0 + rng.normal(0, 0.02)))
        for a in angles[:-1]
    ]
    contour.append(contour[0])
    strokes = [contour]
    for _ in range(int(rng.integers(2, 4))):
        strokes.append(_tick(rng))
    return strokes


def _cross_strokes(rng):
    tilt = rng.uniform(-0.2, 0.2)
    cos_t, sin_t = math.cos(tilt), math.sin(tilt)

    def arm(p, q):
        rot = lambda x, y: (cos_t * x - sin_t * y, sin_t * x + cos_t * y)
        return _interp(rot(*p), rot(*q), 6)

    strokes = [arm((-1.0, -1.0), (1.0, 1.0)), arm((-1.0, 1.0), (1.0, -1.0))]
    if rng.random() < 0.5:
        strokes.append(_interp((-0.35, 1.2), (0.35, 1.2), 3))
    return strokes


def _square_strokes(rng):
    c = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    start = int(rng.integers(4))
    strokes = [
        _interp(c[(start + i) % 4], c[(start + i + 1) % 4], 4) for i in range(4)
    ]
    if rng.random() < 0.5:
        strokes.append(_tick(rng, reach=0.25, length=0.1))
    return strokes


def _star_strokes(rng):
    """Pentagram drawn piecewise: ten half-edge strokes from a random start
    vertex in a random direction, so early prefixes are short bare diagonals
    while the finished shape is always the same five-pointed star."""
    vertices = [
        (math.cos(-math.pi / 2 + i * 2 * math.pi / 5),
         math.sin(-math.pi / 2 + i * 2 * math.pi / 5))
        for i in range(5)
    ]
    start = int(rng.integers(5))
    step = 2 if rng.random() < 0.5 else -2
    seq = [(start + step * i) % 5 for i in range(6)]
    strokes = []
    for a, b in zip(seq, seq[1:]):
        p, q = vertices[a], vertices[b]
        mid = ((p[0] + q[0]) / 2, (p[1] + q[1]) / 2)
        strokes.append(_interp(p, mid, 3))
        strokes.append(_interp(mid, q, 3))
    if rng.random() < 0.4:
        strokes.append(_tick(rng, reach=0.2, length=0.1))
    return strokes


def _zigzag_strokes(rng):
    count = int(rng.integers(5, 9))
    amp = rng.uniform(0.8, 1.3)
    xs = np.linspace(-1.0, 1.0, count)
    vertices = [
        (float(x), -0.5 * amp if i % 2 == 0 else 0.5 * amp) for i, x in enumerate(xs)
    ]
    if rng.random() < 0.5 or count < 6:
        k = count // 2
        return [_chain(vertices[: k + 1]), _chain(vertices[k:])]
    k = count // 3
    return [
        _chain(vertices[: k + 1]),
        _chain(vertices[k: 2 * k + 1]),
        _chain(vertices[2 * k:]),
    ]


_BUILDERS = {
    "circle": _circle_strokes,
    "cross": _cross_strokes,
    "square": _square_strokes,
    "star": _star_strokes,
    "zigzag": _zigzag_strokes,
}


def generate_sketch(category: str, index: int, seed: int = 7) -> Sketch:
    rng = stable_rng(seed, f"synthetic|{category}|{index}")
    strokes = _place(_BUILDERS[category](rng), rng)
    return Sketch(
        id=f"{category}_{index:03d}",
        category=category,
        extent=(EXTENT, EXTENT),
        strokes=strokes,
    )


def generate_dataset(per_category: int = 40, seed: int = 7) -> Dataset:
    sketches = [
        generate_sketch(category, i, seed)
        for category in CATEGORIES
        for i in range(per_category)
    ]
    return Dataset(tuple(sketches))


def write_dataset(dataset: Dataset, root) -> None:
    """Materialize as the canonical on-disk layout root/<category>/<id>.json."""
    root = Path(root)
    for sketch in dataset.sketches:
        d = root / sketch.category
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{sketch.id}.json").write_text(serialize_sketch(sketch), encoding="utf-8")
