import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sketchepitome.analysis import (
    CategoryStats,
    category_stats,
    emit_report,
    exceedance_curves,
    headline_fractions,
    read_category_stats_csv,
    write_category_stats_csv,
)
from sketchepitome.epitome import result_from_labels
from sketchepitome.errors import DataError


def results_with_scores(category, scores):
    """Build epitomizable results whose scores are exactly the given values."""
    out = []
    for i, s in enumerate(scores):
        if s == 0.0:
            labels = [1]
        else:
            # score = e/n with e > 1; use n = denominator, e = numerator
            frac = s
            for n in range(2, 2000):
                e = frac * n
                if abs(e - round(e)) < 1e-12 and round(e) >= 2:
                    labels = [0] * (int(round(e)) - 1) + [1] * (n - int(round(e)) + 1)
                    break
            else:
                raise AssertionError(f"cannot represent score {s}")
        r = result_from_labels(f"{category}_{i}", category, labels)
        assert r.score == pytest.approx(s, abs=1e-12)
        out.append(r)
    return out


def median_stderr_reference(scores):
    """Sort-based reference, independent of numpy statistics calls."""
    values = sorted(scores)
    n = len(values)
    mid = n // 2
    median = values[mid] if n % 2 else (values[mid - 1] + values[mid]) / 2.0
    if n < 2:
        return median, 0.0
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return median, math.sqrt(var) / math.sqrt(n)


class TestCategoryStats:
    def test_odd_median(self):
        stats = category_stats(results_with_scores("c", [0.2, 0.4, 0.6]))
        assert stats[0].median_score == pytest.approx(0.4, abs=1e-12)

    def test_all_zero_scores(self):
        stats = category_stats(results_with_scores("c", [0.0, 0.0, 0.0, 0.0]))
        assert stats[0].median_score == 0.0
        assert stats[0].stderr == 0.0
        assert stats[0].bar_low == 0.0 and stats[0].bar_high == 0.0

    def test_matches_sort_based_reference(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            n = int(rng.integers(1, 101))
            scores = [float(f) for f in rng.integers(2, 10, size=n) / 10.0]
            stats = category_stats(results_with_scores("c", scores))
            ref_median, ref_stderr = median_stderr_reference(scores)
            assert abs(stats[0].median_score - ref_median) < 1e-12
            assert abs(stats[0].stderr - ref_stderr) < 1e-12

    def test_bars_clamped(self):
        scores = [0.0, 1.0, 0.0, 1.0, 1.0]
        stats = category_stats(results_with_scores("c", scores))
        s = stats[0]
        assert 0.0 <= s.bar_low <= s.median_score <= s.bar_high <= 1.0

    def test_skips_non_epitomizable(self):
        results = results_with_scores("c", [0.5, 0.5]) + [
            result_from_labels("c_x", "c", [1, 0])
        ]
        stats = category_stats(results)
        assert stats[0].n == 2

    def test_empty_input(self):
        with pytest.raises(DataError):
            category_stats([])
        with pytest.raises(DataError):
            category_stats([result_from_labels("x", "c", [0])])


class TestExceedance:
    def test_threshold_one_gives_zero(self):
        curves = exceedance_curves(results_with_scores("c", [0.5, 1.0]), [1.0])
        assert curves[0].fractions == (0.0,)

    def test_threshold_zero_all_positive(self):
        curves = exceedance_curves(results_with_scores("c", [0.5, 0.25, 0.75]), [0.0])
        assert curves[0].fractions == (1.0,)

    def test_counts_match_brute_force(self):
        rng = np.random.default_rng(1)
        scores = [float(f) for f in rng.integers(0, 11, size=60) / 10.0]
        scores = [s if s != 0.1 else 0.2 for s in scores]  # representable set
        thresholds = [0.0, 0.25, 0.5, 0.75, 1.0]
        curves = exceedance_curves(results_with_scores("c", scores), thresholds)
        for t, frac in zip(curves[0].thresholds, curves[0].fractions):
            brute = sum(1 for s in scores if s > t)
            assert frac == brute / len(scores)

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(2)
        scores = [float(f) for f in rng.integers(2, 10, size=40) / 10.0]
        thresholds = np.linspace(0, 1, 21)
        curves = exceedance_curves(results_with_scores("c", scores), thresholds)
        fr = curves[0].fractions
        assert all(a >= b for a, b in zip(fr, fr[1:]))

    def test_bad_thresholds(self):
        results = results_with_scores("c", [0.5])
        with pytest.raises(DataError):
            exceedance_curves(results, [0.5, 0.25])
        with pytest.raises(DataError):
            exceedance_curves(results, [-0.1, 0.5])


class TestHeadline:
    def test_constructed_fixture(self):
        stats = [
            CategoryStats("a", 5, 0.1, 0.0, 0.1, 0.1),
            CategoryStats("b", 5, 0.4, 0.0, 0.4, 0.4),
            CategoryStats("c", 5, 0.6, 0.0, 0.6, 0.6),
            CategoryStats("d", 5, 0.9, 0.0, 0.9, 0.9),
        ]
        (h,) = headline_fractions(stats, [0.5])
        assert (h.numerator, h.denominator) == (2, 4)
        assert h.fraction == 0.5

    def test_cutoff_zero(self):
        stats = [CategoryStats("a", 3, 0.0, 0.0, 0.0, 0.0)]
        (h,) = headline_fractions(stats, [0.0])
        assert h.numerator == 0  # strictly below zero is impossible

    def test_fifty_category_fixture(self):
        stats = [
            CategoryStats(f"c{i:02d}", 4, 0.3 if i < 21 else 0.8, 0.0, 0.0, 1.0)
            for i in range(50)
        ]
        (h,) = headline_fractions(stats, [0.5])
        assert (h.numerator, h.denominator) == (21, 50)
        assert h.fraction == pytest.approx(0.42)

    def test_denominator_is_category_count(self):
        stats = [CategoryStats(f"c{i}", 1, i / 10, 0.0, 0.0, 1.0) for i in range(7)]
        for h in headline_fractions(stats, [0.1, 0.5, 1.1]):
            assert h.denominator == 7


class TestEmitReport:
    def test_empty_curves_header_only(self, tmp_path):
        stats = category_stats(results_with_scores("c", [0.5]))
        emit_report(stats, [], tmp_path)
        text = (tmp_path / "exceedance.csv").read_text()
        assert text == "category,threshold,fraction\n"

    def test_marker_counts(self, tmp_path):
        results = results_with_scores("a", [0.25, 0.5]) + results_with_scores(
            "b", [0.75, 0.5]
        )
        stats = category_stats(results)
        curves = exceedance_curves(results, [0.0, 0.5, 1.0])
        emit_report(stats, curves, tmp_path)
        fig3 = (tmp_path / "fig3.svg").read_text()
        assert len(re.findall(r'class="median"', fig3)) == 2
        assert len(re.findall(r'class="errorbar"', fig3)) == 2
        fig4 = (tmp_path / "fig4.svg").read_text()
        assert len(re.findall(r'class="curve"', fig4)) == 2

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        scores = [float(f) for f in rng.integers(2, 10, size=30) / 10.0]
        stats = category_stats(results_with_scores("c", scores))
        path = tmp_path / "category_stats.csv"
        write_category_stats_csv(stats, path)
        again = read_category_stats_csv(path)
        assert len(again) == len(stats)
        for a, b in zip(stats, again):
            assert a.category == b.category and a.n == b.n
            assert abs(a.median_score - b.median_score) < 1e-9
            assert abs(a.stderr - b.stderr) < 1e-9
            assert abs(a.bar_low - b.bar_low) < 1e-9
            assert abs(a.bar_high - b.bar_high) < 1e-9

    def test_headline_json(self, tmp_path):
        stats = [CategoryStats("a", 2, 0.2, 0.0, 0.2, 0.2)]
        emit_report(stats, [], tmp_path, headline=headline_fractions(stats, [0.5]))
        assert (tmp_path / "headline.json").exists()


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30))
def test_bar_endpoints_always_in_range(raw_scores):
    stats = [
        CategoryStats(
            "c",
            len(raw_scores),
            float(np.median(raw_scores)),
            float(np.std(raw_scores)),
            max(0.0, float(np.median(raw_scores) - np.std(raw_scores))),
            min(1.0, float(np.median(raw_scores) + np.std(raw_scores))),
        )
    ]
    s = stats[0]
    assert 0.0 <= s.bar_low <= s.bar_high <= 1.0
