"""Category-level statistics over epitome results, plus report files.

All statistics are computed over epitomizable results only; a sketch whose
full canvas was misclassified never enters a denominator. Output files are
deterministic: CSV numbers are written with full repr precision and the
charts are small self-contained SVG 1.1 documents.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .epitome import EpitomeResult


@dataclass(frozen=True)
class CategoryStats:
    category: str
    n: int
    median_score: float
    stderr: float
    bar_low: float
    bar_high: float


@dataclass(frozen=True)
class ExceedanceCurve:
    category: str
    thresholds: tuple[float, ...]
    fractions: tuple[float, ...]


@dataclass(frozen=True)
class HeadlineFraction:
    cutoff: float
    numerator: int
    denominator: int
    fraction: float


def _scores_by_category(results: Sequence[EpitomeResult]) -> dict[str, list[float]]:
    groups: dict[str, list[float]] = {}
    for r in results:
        if not r.epitomizable:
            continue
        groups.setdefault(r.category, []).append(float(r.score))
    if not groups:
        raise DataError("no epitomizable results")
    return dict(sorted(groups.items()))


def category_stats(results: Sequence[EpitomeResult]) -> list[CategoryStats]:
    """Median score per category with a standard-error bar clamped to [0, 1].

    Median uses the even-count convention (mean of the middle two); the
    standard error is the sample standard deviation over sqrt(n), zero for
    a single observation.
    """
    out = []
    for category, scores in _scores_by_category(results).items():
        arr = np.asarray(scores, dtype=np.float64)
        median = float(np.median(arr))
        stderr = 0.0 if len(arr) < 2 else float(arr.std(ddof=1) / math.sqrt(len(arr)))
        out.append(
            CategoryStats(
                category=category,
                n=len(arr),
                median_score=median,
                stderr=stderr,
                bar_low=max(0.0, median - stderr),
                bar_high=min(1.0, median + stderr),
            )
        )
    return out


def exceedance_curves(
    results: Sequence[EpitomeResult], thresholds: Sequence[float]
) -> list[ExceedanceCurve]:
    """Per category: fraction of sketches whose score strictly exceeds each
    threshold, normalized by that category's epitomizable count."""
    thresholds = [float(t) for t in thresholds]
    if any(t2 < t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise DataError("thresholds must be ascending")
    if any(not 0.0 <= t <= 1.0 for t in thresholds):
        raise DataError("thresholds must lie within [0, 1]")
    out = []
    for category, scores in _scores_by_category(results).items():
        arr = np.asarray(scores, dtype=np.float64)
        fracs = tuple(float((arr > t).sum() / len(arr)) for t in thresholds)
        out.append(
            ExceedanceCurve(category=category, thresholds=tuple(thresholds), fractions=fracs)
        )
    return out


def headline_fractions(
    stats: Sequence[CategoryStats], cutoffs: Sequence[float]
) -> list[HeadlineFraction]:
    """Fraction of categories whose median score is strictly below each cutoff."""
    if not stats:
        raise DataError("no category statistics")
    out = []
    for cutoff in cutoffs:
        num = sum(1 for s in stats if s.median_score < cutoff)
        out.append(
            HeadlineFraction(
                cutoff=float(cutoff),
                numerator=num,
                denominator=len(stats),
                fraction=num / len(stats),
            )
        )
    return out


# --- report files ----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_category_stats_csv(stats: Sequence[CategoryStats], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["category", "n", "median", "stderr", "bar_low", "bar_high"])
        for s in stats:
            writer.writerow(
                [s.category, s.n, _fmt(s.median_score), _fmt(s.stderr),
                 _fmt(s.bar_low), _fmt(s.bar_high)]
            )


def read_category_stats_csv(path) -> list[CategoryStats]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                CategoryStats(
                    category=row["category"],
                    n=int(row["n"]),
                    median_score=float(row["median"]),
                    stderr=float(row["stderr"]),
                    bar_low=float(row["bar_low"]),
                    bar_high=float(row["bar_high"]),
                )
            )
    return out


def write_exceedance_csv(curves: Sequence[ExceedanceCurve], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["category", "threshold", "fraction"])
        for curve in curves:
            for t, f in zip(curve.thresholds, curve.fractions):
                writer.writerow([curve.category, _fmt(t), _fmt(f)])


_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_SVG_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
    'width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
)

_MARGIN = dict(left=60, right=30, top=30, bottom=70)


def _axes(w, h):
    left, right = _MARGIN["left"], w - _MARGIN["right"]
    top, bottom = _MARGIN["top"], h - _MARGIN["bottom"]
    parts = [
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = bottom - frac * (bottom - top)
        parts.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{frac}</text>'
        )
    return parts, (left, right, top, bottom)


def median_chart_svg(stats: Sequence[CategoryStats], width=720, height=360) -> str:
    """Point-with-error-bar chart: one circle and one bar line per category."""
    parts = [_SVG_HEADER.format(w=width, h=height)]
    axis, (left, right, top, bottom) = _axes(width, height)
    parts.extend(axis)

    def ypix(v: float) -> float:
        return bottom - v * (bottom - top)

    n = len(stats)
    for i, s in enumerate(stats):
        x = left + (i + 0.5) * (right - left) / max(n, 1)
        parts.append(
            f'<line class="errorbar" x1="{x:.2f}" y1="{ypix(s.bar_low):.2f}" '
            f'x2="{x:.2f}" y2="{ypix(s.bar_high):.2f}" stroke="#555" stroke-width="1.5"/>'
        )
        parts.append(
            f'<circle class="median" cx="{x:.2f}" cy="{ypix(s.median_score):.2f}" '
            f'r="3.5" fill="#1f77b4"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{bottom + 12}" font-size="10" text-anchor="end" '
            f'transform="rotate(-45 {x:.2f} {bottom + 12})">{s.category}</text>'
        )
    parts.append(
        f'<text x="{(left + right) / 2}" y="{height - 6}" font-size="12" '
        f'text-anchor="middle">category</text>'
    )
    parts.append(
        f'<text x="14" y="{(top + bottom) / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {(top + bottom) / 2})">median epitome score</text>'
    )
    parts.append("</svg>\n")
    return "\n".join(parts)


def exceedance_chart_svg(curves: Sequence[ExceedanceCurve], width=720, height=420) -> str:
    """Multi-line chart: fraction of sketches above each score threshold."""
    parts = [_SVG_HEADER.format(w=width, h=height)]
    axis, (left, right, top, bottom) = _axes(width, height)
    parts.extend(axis)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = left + frac * (right - left)
        parts.append(
            f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{bottom + 16}" font-size="11" text-anchor="middle">{frac}</text>'
        )
    for i, curve in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(
            f"{left + t * (right - left):.2f},{bottom - f * (bottom - top):.2f}"
            for t, f in zip(curve.thresholds, curve.fractions)
        )
        parts.append(
            f'<polyline class="curve" points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text class="legend" x="{right - 4}" y="{top + 14 * (i + 1)}" font-size="11" '
            f'text-anchor="end" fill="{color}">{curve.category}</text>'
        )
    parts.append(
        f'<text x="{(left + right) / 2}" y="{height - 6}" font-size="12" '
        f'text-anchor="middle">epitome score threshold</text>'
    )
    parts.append(
        f'<text x="14" y="{(top + bottom) / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {(top + bottom) / 2})">fraction above threshold</text>'
    )
    parts.append("</svg>\n")
    return "\n".join(parts)


def emit_report(
    stats: Sequence[CategoryStats],
    curves: Sequence[ExceedanceCurve],
    out_dir,
    headline: Sequence[HeadlineFraction] | None = None,
) -> list[Path]:
    """Write category_stats.csv, exceedance.csv, fig3.svg, fig4.svg (and
    headline.json when given) into ``out_dir``; returns the paths written."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        p = out_dir / "category_stats.csv"
        write_category_stats_csv(stats, p)
        written.append(p)
        p = out_dir / "exceedance.csv"
        write_exceedance_csv(curves, p)
        written.append(p)
        p = out_dir / "fig3.svg"
        p.write_text(median_chart_svg(stats), encoding="utf-8")
        written.append(p)
        p = out_dir / "fig4.svg"
        p.write_text(exceedance_chart_svg(curves), encoding="utf-8")
        written.append(p)
        if headline is not None:
            p = out_dir / "headline.json"
            p.write_text(
                json.dumps(
                    [
                        {
                            "cutoff": h.cutoff,
                            "numerator": h.numerator,
                            "denominator": h.denominator,
                            "fraction": h.fraction,
                        }
                        for h in headline
                    ],
                    indent=2,
                )
                + "\n",
                encoding="utf-8",
            )
            written.append(p)
    except OSError as exc:
        raise DataError(f"cannot write report into {out_dir}: {exc}") from exc
    return written
