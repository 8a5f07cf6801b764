"""The minimal discriminative stroke prefix of a sketch.

Rendering the first i strokes for i = 1..N gives the cumulative canvas
sequence. Classifying every canvas yields a binary label sequence L
(1 = correct category). The suffix products P_i = l_i * l_{i+1} * ... * l_N
mark the positions from which every later canvas is also correct; the
epitome index e is the smallest i with P_i = 1, i.e. the earliest canvas
that is correctly classified and stays correctly classified as the
remaining strokes are added. The epitome score is e/N, except that e = 1
scores 0: when the very first stroke already identifies the category, the
sketch is maximally sparse.

A sketch whose full canvas is misclassified has no epitome; that outcome
is a first-class result (``epitomizable=False``), not an error, so batch
runs can report skip counts.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import accumulate
from operator import mul
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, InvariantError
from .raster import blank_canvas, dilate, draw_stroke
from .sketch_io import Sketch


def product_sequence(labels: Sequence[int]) -> tuple[int, ...]:
    """Suffix products of a binary label sequence: P_i = prod(labels[i:])."""
    if len(labels) == 0:
        raise ValueError("label sequence must be non-empty")
    if any(b not in (0, 1) for b in labels):
        raise ValueError("labels must be 0 or 1")
    rev = list(accumulate(reversed(labels), mul))
    return tuple(reversed(rev))


def epitome_index(products: Sequence[int]) -> int | None:
    """Smallest 1-based index with product 1, or None when the final label
    is 0 (no epitome exists; callers should have filtered such sketches)."""
    for i, p in enumerate(products):
        if p == 1:
            return i + 1
    return None


def epitome_score(e: int, n: int) -> float:
    """e/N, except e = 1 scores 0 (first stroke alone already identifies)."""
    if not (1 <= e <= n):
        raise ValueError(f"epitome index {e} out of range 1..{n}")
    if e == 1:
        return 0.0
    return e / n


@dataclass(frozen=True)
class EpitomeResult:
    """Per-sketch outcome: labels, suffix products, index and score."""

    sketch_id: str
    category: str
    n_strokes: int
    labels: tuple[int, ...]
    products: tuple[int, ...]
    e: int | None
    score: float | None
    epitomizable: bool

    def to_record(self) -> dict:
        return {
            "id": self.sketch_id,
            "category": self.category,
            "N": self.n_strokes,
            "labels": list(self.labels),
            "e": self.e,
            "score": self.score,
            "epitomizable": self.epitomizable,
        }


def validate_result(result: EpitomeResult) -> EpitomeResult:
    """Check the internal consistency of a result; raises on violation."""
    r = result
    ok = (
        len(r.labels) == r.n_strokes
        and r.products == product_sequence(r.labels)
        and all(b in (0, 1) for b in r.labels)
    )
    if ok and r.epitomizable:
        ok = (
            r.labels[-1] == 1
            and r.e is not None
            and 1 <= r.e <= r.n_strokes
            and all(b == 1 for b in r.labels[r.e - 1:])
            and (r.e == 1 or r.labels[r.e - 2] == 0)
            and r.score == epitome_score(r.e, r.n_strokes)
            and 0.0 <= r.score <= 1.0
            and (r.score == 0.0) == (r.e == 1)
        )
    elif ok:
        ok = r.labels[-1] == 0 and r.e is None and r.score is None
    if not ok:
        raise InvariantError(f"inconsistent epitome result for sketch {r.sketch_id!r}")
    return result


def result_from_labels(sketch_id, category, labels) -> EpitomeResult:
    """Assemble a result from a precomputed label sequence."""
    labels = tuple(int(b) for b in labels)
    products = product_sequence(labels)
    e = epitome_index(products)
    return validate_result(
        EpitomeResult(
            sketch_id=sketch_id,
            category=category,
            n_strokes=len(labels),
            labels=labels,
            products=products,
            e=e,
            score=None if e is None else epitome_score(e, len(labels)),
            epitomizable=e is not None,
        )
    )


# --- cumulative canvases -----------------------------------------------------


def iter_cumulative_canvases(sketch: Sketch, side: int) -> Iterator[np.ndarray]:
    """Lazily yield the dilated canvas of each stroke prefix, one at a time.

    Strokes accumulate on a single undilated canvas so each prefix costs one
    stroke's rasterization; the yielded canvases are dilated copies, bit
    identical to dilate(rasterize(sketch, i, side)).
    """
    acc = blank_canvas(side)
    for i in range(sketch.n_strokes):
        draw_stroke(acc, sketch, i)
        yield dilate(acc)


def cumulative_canvases(sketch: Sketch, side: int) -> list[np.ndarray]:
    """All dilated prefix canvases; element i-1 renders strokes 1..i."""
    return list(iter_cumulative_canvases(sketch, side))


def label_sequence(classifier, canvases: Iterable[np.ndarray], true_category: str) -> list[int]:
    """1 where the classifier assigns ``true_category``, else 0."""
    if true_category not in set(map(str, classifier.classes_)):
        raise DataError(f"category {true_category!r} unknown to the model")
    return [
        1 if classifier.predict_canvas(c)[0] == true_category else 0 for c in canvases
    ]


def extract_epitome(classifier, sketch: Sketch) -> EpitomeResult:
    """Run the full per-sketch procedure against a trained classifier.

    Raster and feature parameters come from the classifier container, so
    extraction always matches the representation the model was trained on.
    """
    labels = label_sequence(
        classifier, iter_cumulative_canvases(sketch, classifier.side), sketch.category
    )
    return result_from_labels(sketch.id, sketch.category, labels)


def default_threads() -> int:
    value = os.environ.get("EPITOME_THREADS", "")
    if value.strip():
        try:
            n = int(value)
        except ValueError as exc:
            raise DataError(f"EPITOME_THREADS must be an integer, got {value!r}") from exc
        if n < 1:
            raise DataError("EPITOME_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def extract_epitomes(
    classifier, sketches: Sequence[Sketch], threads: int | None = None
) -> list[EpitomeResult]:
    """Batch extraction; sketches are independent, so they run in parallel
    against the shared immutable model. Result order follows input order."""
    if threads is None:
        threads = default_threads()
    if threads == 1 or len(sketches) <= 1:
        return [extract_epitome(classifier, s) for s in sketches]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: extract_epitome(classifier, s), sketches))


# --- batch result files --------------------------------------------------------


def write_results_ndjson(results: Iterable[EpitomeResult], path) -> None:
    """One compact JSON record per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record(), separators=(",", ":")) + "\n")


def read_results_ndjson(path) -> list[EpitomeResult]:
    results = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                result = EpitomeResult(
                    sketch_id=rec["id"],
                    category=rec["category"],
                    n_strokes=rec["N"],
                    labels=tuple(int(b) for b in rec["labels"]),
                    products=product_sequence(rec["labels"]),
                    e=rec["e"],
                    score=rec["score"],
                    epitomizable=rec["epitomizable"],
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad result record: {exc}") from exc
            results.append(validate_result(result))
    return results
