"""Canonical sketch representation, SVG import, dataset loading and splitting.

A sketch is a temporally ordered list of strokes; each stroke is a polyline
of (x, y) points in a declared source coordinate space (origin top-left,
y pointing down). The canonical on-disk format is a single JSON document:

    {"id": "<string>", "category": "<string>", "extent": [800, 800],
     "strokes": [[[x, y], [x, y], ...], ...]}

The outer ``strokes`` array order is the temporal drawing order. SVG files
from stroke-level drawing databases (one ``path`` per stroke, document order
= drawing order) can be converted via :func:`import_svg`.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError

Point = tuple[float, float]
Stroke = tuple[Point, ...]

# Uniform parameter samples used to flatten one cubic Bezier segment.
CUBIC_FLATTEN_SAMPLES = 16


def _check_point(p, extent, where: str) -> Point:
    if not (isinstance(p, (list, tuple)) and len(p) == 2):
        raise ParseError("bad_point", f"{where}: point must be an [x, y] pair")
    x, y = p
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (x, y)):
        raise ParseError("bad_point", f"{where}: coordinates must be numbers")
    x, y = float(x), float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ParseError("nonfinite_point", f"{where}: coordinates must be finite")
    if not (0.0 <= x <= extent[0] and 0.0 <= y <= extent[1]):
        raise ParseError(
            "out_of_extent",
            f"{where}: point ({x}, {y}) outside extent {extent[0]}x{extent[1]}",
        )
    return (x, y)


@dataclass(frozen=True)
class Sketch:
    """One freehand sketch: strokes in temporal order within ``extent``.

    Invariants are enforced at construction: at least one stroke, at least
    two points per stroke, all points finite and inside the extent.
    """

    id: str
    category: str
    extent: tuple[float, float]
    strokes: tuple[Stroke, ...]

    def __post_init__(self):
        if not self.category:
            raise ParseError("empty_category", f"sketch {self.id!r}: empty category")
        w, h = self.extent
        if not (w > 0 and h > 0 and math.isfinite(w) and math.isfinite(h)):
            raise ParseError("bad_extent", f"sketch {self.id!r}: extent must be positive")
        if len(self.strokes) == 0:
            raise ParseError("empty_sketch", f"sketch {self.id!r}: empty sketch (no strokes)")
        for si, stroke in enumerate(self.strokes):
            if len(stroke) < 2:
                raise ParseError(
                    "short_stroke", f"sketch {self.id!r}: stroke {si} has fewer than 2 points"
                )
            for p in stroke:
                _check_point(p, self.extent, f"sketch {self.id!r}, stroke {si}")

    @property
    def n_strokes(self) -> int:
        return len(self.strokes)


@dataclass(frozen=True)
class Dataset:
    """A collection of sketches plus the sorted unique category names."""

    sketches: tuple[Sketch, ...]
    categories: tuple[str, ...] = field(default=())

    def __post_init__(self):
        cats = tuple(sorted({s.category for s in self.sketches}))
        if not self.categories:
            object.__setattr__(self, "categories", cats)
        else:
            missing = set(cats) - set(self.categories)
            if missing:
                raise DataError(f"sketch categories missing from category list: {sorted(missing)}")

    def by_category(self) -> dict[str, list[Sketch]]:
        out: dict[str, list[Sketch]] = {c: [] for c in self.categories}
        for s in self.sketches:
            out[s.category].append(s)
        return out

    def __len__(self) -> int:
        return len(self.sketches)


def parse_sketch(text: str | bytes) -> Sketch:
    """Parse one canonical sketch JSON document.

    Raises :class:`ParseError` with a distinguishing ``code`` for malformed
    JSON, missing fields, an empty sketch, a too-short stroke, or an
    out-of-extent point.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("malformed_json", f"not UTF-8 text: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("malformed_json", f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("malformed_json", "top-level JSON value must be an object")

    for key in ("id", "category", "extent", "strokes"):
        if key not in doc:
            raise ParseError("missing_field", f"missing field {key!r}")
    if not isinstance(doc["id"], str) or not isinstance(doc["category"], str):
        raise ParseError("bad_type", "'id' and 'category' must be strings")
    ext = doc["extent"]
    if not (isinstance(ext, (list, tuple)) and len(ext) == 2):
        raise ParseError("bad_extent", "'extent' must be a [width, height] pair")
    if not isinstance(doc["strokes"], list):
        raise ParseError("bad_type", "'strokes' must be an array")

    strokes = []
    for si, stroke in enumerate(doc["strokes"]):
        if not isinstance(stroke, list):
            raise ParseError("bad_type", f"stroke {si} must be an array of points")
        points = []
        for p in stroke:
            if not (
                isinstance(p, (list, tuple))
                and len(p) == 2
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p)
            ):
                raise ParseError(
                    "bad_point", f"stroke {si}: point must be a numeric [x, y] pair, got {p!r}"
                )
            points.append((float(p[0]), float(p[1])))
        strokes.append(tuple(points))
    return Sketch(
        id=doc["id"],
        category=doc["category"],
        extent=(float(ext[0]), float(ext[1])),
        strokes=tuple(strokes),
    )


def serialize_sketch(sketch: Sketch) -> str:
    """Serialize to the canonical JSON format (lossless float round-trip)."""
    doc = {
        "id": sketch.id,
        "category": sketch.category,
        "extent": list(sketch.extent),
        "strokes": [[[x, y] for x, y in stroke] for stroke in sketch.strokes],
    }
    return json.dumps(doc, separators=(",", ":"))


# --- SVG import -----------------------------------------------------------

_SVG_NUM = r"[-+]?(?:\d*\.\d+|\d+\.?)(?:[eE][-+]?\d+)?"
_SVG_TOKEN = re.compile(r"[MmLlCcZzHhVvQqTtSsAa]|" + _SVG_NUM)


def _svg_length(value: str | None, name: str) -> float:
    if value is None:
        raise ParseError("missing_dimensions", f"SVG is missing the {name!r} attribute")
    m = re.fullmatch(r"\s*(" + _SVG_NUM + r")\s*(px)?\s*", value)
    if m is None:
        raise ParseError("missing_dimensions", f"cannot read SVG {name!r} value {value!r}")
    return float(m.group(1))


def _cubic_point(p0, c1, c2, p1, t: float) -> Point:
    u = 1.0 - t
    x = u**3 * p0[0] + 3 * u**2 * t * c1[0] + 3 * u * t**2 * c2[0] + t**3 * p1[0]
    y = u**3 * p0[1] + 3 * u**2 * t * c1[1] + 3 * u * t**2 * c2[1] + t**3 * p1[1]
    return (x, y)


def import_svg(text: str | bytes, category: str, sketch_id: str = "svg") -> Sketch:
    """Convert a restricted-profile SVG into a :class:`Sketch`.

    The profile: ``path`` elements whose ``d`` uses MoveTo, LineTo and cubic
    CurveTo (absolute or relative) only, one path per stroke, document order
    = temporal order. Cubic segments are flattened by sampling the Bezier at
    ``CUBIC_FLATTEN_SAMPLES`` uniform parameter values. The source extent is
    read from the root ``width``/``height`` attributes; points that overshoot
    the declared extent (possible for curves whose control points lie outside
    it) are clipped onto the boundary.
    """
    import xml.etree.ElementTree as ET

    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError("malformed_svg", f"malformed SVG: {exc}") from exc

    width = _svg_length(root.attrib.get("width"), "width")
    height = _svg_length(root.attrib.get("height"), "height")

    paths = [el for el in root.iter() if el.tag.rsplit("}", 1)[-1] == "path"]
    if not paths:
        raise ParseError("no_paths", "SVG contains no path elements")

    def clip(p: Point) -> Point:
        return (min(max(p[0], 0.0), width), min(max(p[1], 0.0), height))

    strokes: list[Stroke] = []
    for pi, el in enumerate(paths):
        d = el.attrib.get("d", "")
        tokens = _SVG_TOKEN.findall(d)
        pos = 0

        def take(n: int) -> list[float]:
            nonlocal pos
            if pos + n > len(tokens) or any(t[0].isalpha() for t in tokens[pos:pos + n]):
                raise ParseError("bad_path_data", f"path {pi}: truncated command arguments")
            vals = [float(t) for t in tokens[pos:pos + n]]
            pos += n
            return vals

        points: list[Point] = []
        cur: Point | None = None
        cmd = None
        while pos < len(tokens):
            tok = tokens[pos]
            if tok[0].isalpha():
                cmd = tok
                pos += 1
                if cmd in ("M", "m") and points:
                    raise ParseError(
                        "unsupported_command",
                        f"path {pi}: extra MoveTo inside a path (one stroke per path)",
                    )
                if cmd not in ("M", "m", "L", "l", "C", "c"):
                    raise ParseError(
                        "unsupported_command", f"path {pi}: unsupported command {cmd!r}"
                    )
            if cmd is None:
                raise ParseError("bad_path_data", f"path {pi}: data before any command")
            rel = cmd.islower()
            if cmd in ("M", "m", "L", "l"):
                x, y = take(2)
                if rel and cur is not None:
                    x, y = cur[0] + x, cur[1] + y
                cur = (x, y)
                points.append(clip(cur))
                # further coordinate pairs after MoveTo act as LineTo
                if cmd == "M":
                    cmd = "L"
                elif cmd == "m":
                    cmd = "l"
            else:  # cubic
                if cur is None:
                    raise ParseError("bad_path_data", f"path {pi}: CurveTo before MoveTo")
                vals = take(6)
                if rel:
                    vals = [vals[k] + cur[k % 2] for k in range(6)]
                c1, c2, p1 = (vals[0], vals[1]), (vals[2], vals[3]), (vals[4], vals[5])
                for k in range(1, CUBIC_FLATTEN_SAMPLES + 1):
                    t = k / CUBIC_FLATTEN_SAMPLES
                    points.append(clip(_cubic_point(cur, c1, c2, p1, t)))
                cur = p1
        if len(points) < 2:
            raise ParseError("short_stroke", f"path {pi}: fewer than 2 points")
        strokes.append(tuple(points))

    return Sketch(id=sketch_id, category=category, extent=(width, height), strokes=tuple(strokes))


# --- dataset loading and splitting ----------------------------------------


def load_dataset(root: str | Path) -> Dataset:
    """Load every ``root/<category>/<id>.json`` or ``.svg`` file.

    Files are visited in sorted path order so the resulting sketch order is
    stable. Any unreadable or invalid file aborts the load with an error that
    names the offending path. For JSON files the embedded category must match
    the directory name.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    cat_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not cat_dirs:
        raise DataError(f"dataset root {root} has no category subdirectories")

    sketches: list[Sketch] = []
    for cat_dir in cat_dirs:
        category = cat_dir.name
        for path in sorted(cat_dir.iterdir()):
            if path.suffix not in (".json", ".svg"):
                continue
            try:
                data = path.read_bytes()
                if path.suffix == ".json":
                    sketch = parse_sketch(data)
                    if sketch.category != category:
                        raise DataError(
                            f"category {sketch.category!r} in file does not match "
                            f"directory {category!r}"
                        )
                else:
                    sketch = import_svg(data, category, sketch_id=path.stem)
            except (ParseError, DataError, OSError) as exc:
                raise DataError(f"{path}: {exc}") from exc
            sketches.append(sketch)
    if not sketches:
        raise DataError(f"dataset root {root} contains no sketch files")
    return Dataset(sketches=tuple(sketches), categories=tuple(d.name for d in cat_dirs))


def stable_rng(seed: int, key: str) -> np.random.Generator:
    """Generator keyed by (seed, string); stable across platforms and runs."""
    digest = hashlib.sha256(f"{seed}|{key}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def split_dataset(
    dataset: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic per-category train/test partition.

    The per-category train count is round-half-up of ``train_fraction`` times
    the category size; the shuffle is keyed by (seed, category name) so a
    category's split does not depend on the rest of the dataset.
    """
    if not (0.0 < train_fraction < 1.0):
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    train: list[Sketch] = []
    test: list[Sketch] = []
    for category, items in dataset.by_category().items():
        if len(items) < 2:
            raise DataError(f"category {category!r} has fewer than 2 sketches")
        items = sorted(items, key=lambda s: s.id)
        order = stable_rng(seed, category).permutation(len(items))
        n_train = int(math.floor(train_fraction * len(items) + 0.5))
        chosen = set(order[:n_train].tolist())
        for i, sketch in enumerate(items):
            (train if i in chosen else test).append(sketch)
    return Dataset(tuple(train)), Dataset(tuple(test))
