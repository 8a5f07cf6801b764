import json
import subprocess
import sys

import numpy as np
import pytest

from sketchepitome.cli import main
from sketchepitome.epitome import read_results_ndjson, result_from_labels, write_results_ndjson
from sketchepitome.raster import read_pgm
from sketchepitome.sketch_io import load_dataset, serialize_sketch

from conftest import make_dataset, make_sketch, write_json_dataset

SVG = '<svg width="100" height="100"><path d="M 0 0 L 50 0"/><path d="M 0 50 L 50 50"/></svg>'


def svg_dataset(root, categories=("a", "b"), per_category=2):
    for cat in categories:
        d = root / cat
        d.mkdir(parents=True)
        for i in range(per_category):
            (d / f"{cat}{i}.svg").write_text(SVG, encoding="utf-8")
    return root


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_no_subcommand(self, capsys):
        assert main([]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["train", "--data", "x"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0


class TestConvert:
    def test_convert_svg_tree(self, tmp_path, capsys):
        src = svg_dataset(tmp_path / "svg")
        out = tmp_path / "json"
        assert main(["convert", "--in", str(src), "--out", str(out)]) == 0
        ds = load_dataset(out)
        assert len(ds) == 4
        assert all(s.n_strokes == 2 for s in ds.sketches)
        assert (out / "effective_config.json").exists()

    def test_convert_idempotent(self, tmp_path):
        src = svg_dataset(tmp_path / "svg")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["convert", "--in", str(src), "--out", str(out1)]) == 0
        assert main(["convert", "--in", str(src), "--out", str(out2)]) == 0
        a = (out1 / "a" / "a0.json").read_bytes()
        b = (out2 / "a" / "a0.json").read_bytes()
        assert a == b

    def test_convert_no_svgs(self, tmp_path, capsys):
        (tmp_path / "svg" / "a").mkdir(parents=True)
        out = tmp_path / "json"
        assert main(["convert", "--in", str(tmp_path / "svg"), "--out", str(out)]) == 2

    def test_convert_missing_root(self, tmp_path):
        assert main(["convert", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


class TestAugmentCommand:
    def test_augment_writes_battery(self, tmp_path, capsys):
        data = write_json_dataset(make_dataset(("a",), per_category=1), tmp_path / "d")
        out = tmp_path / "aug"
        assert main(["augment", "--data", str(data), "--out", str(out)]) == 0
        pgms = sorted((out / "a").glob("*.pgm"))
        assert len(pgms) == 30
        manifest = json.loads((out / "battery.json").read_text())
        assert len(manifest) == 30
        canvas = read_pgm(pgms[0])
        assert canvas.shape == (256, 256)


class TestEpitomeCommand:
    def test_stub_labels_worked_example(self, tmp_path, capsys):
        sketch = make_sketch("plane9", "vehicle", n_strokes=9, seed=4)
        root = tmp_path / "data" / "vehicle"
        root.mkdir(parents=True)
        (root / "plane9.json").write_text(serialize_sketch(sketch), encoding="utf-8")
        stub = tmp_path / "stub.json"
        stub.write_text(json.dumps({"plane9": [0, 1, 0, 1, 1, 1, 1, 1, 1]}))
        out = tmp_path / "results.ndjson"
        code = main([
            "epitome", "--data", str(tmp_path / "data"),
            "--out", str(out), "--stub-labels", str(stub),
        ])
        assert code == 0
        (record,) = [json.loads(line) for line in out.read_text().splitlines()]
        assert record["e"] == 4
        assert record["epitomizable"] is True
        assert abs(record["score"] - 4 / 9) < 1e-12
        assert record["labels"] == [0, 1, 0, 1, 1, 1, 1, 1, 1]

    def test_stub_labels_dump_canvases(self, tmp_path):
        sketch = make_sketch("s1", "c", n_strokes=3, seed=5)
        root = tmp_path / "data" / "c"
        root.mkdir(parents=True)
        (root / "s1.json").write_text(serialize_sketch(sketch), encoding="utf-8")
        stub = tmp_path / "stub.json"
        stub.write_text(json.dumps({"s1": [0, 1, 1]}))
        out = tmp_path / "r.ndjson"
        code = main([
            "epitome", "--data", str(tmp_path / "data"), "--out", str(out),
            "--stub-labels", str(stub), "--dump-canvases",
        ])
        assert code == 0
        dumps = list((tmp_path / "r.ndjson.canvases").glob("*.pgm"))
        assert len(dumps) == 1 and dumps[0].name == "s1_e2.pgm"

    def test_stub_labels_length_mismatch(self, tmp_path):
        sketch = make_sketch("s1", "c", n_strokes=3, seed=6)
        root = tmp_path / "data" / "c"
        root.mkdir(parents=True)
        (root / "s1.json").write_text(serialize_sketch(sketch), encoding="utf-8")
        stub = tmp_path / "stub.json"
        stub.write_text(json.dumps({"s1": [1]}))
        code = main([
            "epitome", "--data", str(tmp_path / "data"),
            "--out", str(tmp_path / "r.ndjson"), "--stub-labels", str(stub),
        ])
        assert code == 2

    def test_requires_model_or_stub(self, tmp_path):
        data = write_json_dataset(make_dataset(("a",), per_category=1), tmp_path / "d")
        code = main(["epitome", "--data", str(data), "--out", str(tmp_path / "r.ndjson")])
        assert code == 1


class TestAnalyzeCommand:
    def test_empty_results_file(self, tmp_path, capsys):
        results = tmp_path / "empty.ndjson"
        results.write_text("")
        code = main(["analyze", "--results", str(results), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "no epitomizable results" in capsys.readouterr().err

    def test_small_report(self, tmp_path, capsys):
        results = [
            result_from_labels("a1", "apple", [1, 1]),
            result_from_labels("a2", "apple", [1, 1, 1]),
            result_from_labels("b1", "bridge", [0, 0, 1, 1]),
            result_from_labels("b2", "bridge", [0, 1, 1, 1]),
        ]
        path = tmp_path / "r.ndjson"
        write_results_ndjson(results, path)
        out = tmp_path / "report"
        code = main([
            "analyze", "--results", str(path), "--out", str(out),
            "--cutoffs", "0.5,0.75", "--thresholds", "0:1:0.25",
        ])
        assert code == 0
        for name in ("category_stats.csv", "exceedance.csv", "fig3.svg", "fig4.svg",
                     "headline.json", "effective_config.json"):
            assert (out / name).exists()
        stdout = capsys.readouterr().out
        assert "median below 0.5: 1/2" in stdout

    def test_bad_thresholds(self, tmp_path):
        path = tmp_path / "r.ndjson"
        write_results_ndjson([result_from_labels("a1", "a", [1])], path)
        code = main(["analyze", "--results", str(path), "--out", str(tmp_path / "o"),
                     "--thresholds", "nonsense"])
        assert code == 1


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert out.count("ok ") == 5
        assert "FAIL" not in out


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "sketchepitome.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "selftest" in proc.stdout
