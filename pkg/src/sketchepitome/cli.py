"""Command-line surface.

Subcommands: convert, augment, train, eval, epitome, analyze, selftest.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
failure; each failure prints a one-line diagnostic on stderr. Machine
output (eval report, analysis summaries) goes to stdout, progress to
stderr. Outputs carry no timestamps, so identical inputs, seeds and config
produce byte-identical files. The EPITOME_THREADS environment variable
caps extraction parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, epitome, raster
from .classifier import dilated_canvas, evaluate, load_model, save_model, train_pipeline
from .config import PipelineConfig, load_config, write_effective_config
from .errors import ConfigError, DataError, InvariantError, ParseError
from .sketch_io import import_svg, load_dataset, serialize_sketch


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def build_parser() -> _Parser:
    parser = _Parser(prog="sketch-epitome", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("convert", parents=[], help="SVG dataset to canonical JSON")
    p.add_argument("--in", dest="in_dir", required=True, help="input dataset root")
    p.add_argument("--out", dest="out_dir", required=True, help="output dataset root")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", help="dilate and apply the 30-transform battery")
    p.add_argument("--data", required=True, help="canonical dataset root")
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="split, fit the pipeline, grid-search, train")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", dest="model_out", required=True, help="model file to write")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--kernel", choices=("linear", "rbf"), default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument(
        "--augment-train",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="battery-expand the training canvases",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset; JSON to stdout")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("epitome", help="batch epitome extraction to NDJSON")
    p.add_argument("--model", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", dest="results_out", required=True)
    p.add_argument("--dump-canvases", action="store_true")
    p.add_argument(
        "--stub-labels",
        default=None,
        help="JSON file mapping sketch id to a 0/1 label list; bypasses the model",
    )
    p.add_argument("--config", default=None, help="raster settings for stub-label runs")
    p.set_defaults(func=cmd_epitome)

    p = sub.add_parser("analyze", help="category statistics, curves and charts")
    p.add_argument("--results", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--cutoffs", default="0.5,0.75")
    p.add_argument("--thresholds", default="0:1:0.05", help="start:stop:step")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("selftest", help="run the built-in oracle suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        print("usage error: a subcommand is required (see --help)", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    return 0


# --- commands ---------------------------------------------------------------


def cmd_convert(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    if not in_dir.is_dir():
        raise DataError(f"input root {in_dir} is not a directory")
    cat_dirs = sorted(p for p in in_dir.iterdir() if p.is_dir())
    if not cat_dirs:
        raise DataError(f"input root {in_dir} has no category subdirectories")
    count = 0
    for cat_dir in cat_dirs:
        target = out_dir / cat_dir.name
        for path in sorted(cat_dir.glob("*.svg")):
            try:
                sketch = import_svg(path.read_bytes(), cat_dir.name, sketch_id=path.stem)
            except ParseError as exc:
                raise DataError(f"{path}: {exc}") from exc
            target.mkdir(parents=True, exist_ok=True)
            (target / f"{path.stem}.json").write_text(
                serialize_sketch(sketch), encoding="utf-8"
            )
            count += 1
    if count == 0:
        raise DataError(f"no .svg files under {in_dir}")
    write_effective_config(load_config(None), out_dir / "effective_config.json")
    _progress(f"converted {count} sketches into {out_dir}")
    return 0


def cmd_augment(args) -> int:
    config = load_config(args.config)
    dataset = load_dataset(args.data)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    battery = raster.BATTERIES[config.battery]
    for sketch in dataset.sketches:
        canvas = dilated_canvas(sketch, config.side)
        target = out_dir / sketch.category
        target.mkdir(parents=True, exist_ok=True)
        for i, variant in enumerate(raster.augment(canvas, battery)):
            raster.write_pgm(variant, target / f"{sketch.id}_a{i:02d}.pgm")
    (out_dir / "battery.json").write_text(
        json.dumps(raster.battery_manifest(battery), indent=2) + "\n", encoding="utf-8"
    )
    write_effective_config(config, out_dir / "effective_config.json")
    _progress(f"augmented {len(dataset)} sketches x {len(battery)} into {out_dir}")
    return 0


def _apply_train_overrides(config: PipelineConfig, args) -> PipelineConfig:
    if args.seed is not None:
        config.seed = args.seed
    if args.kernel is not None:
        config.kernel = args.kernel
    if args.train_fraction is not None:
        config.train_fraction = args.train_fraction
    if args.folds is not None:
        config.folds = args.folds
    if args.augment_train is not None:
        config.augment_train = args.augment_train
    return config.validate()


def cmd_train(args) -> int:
    config = _apply_train_overrides(load_config(args.config), args)
    dataset = load_dataset(args.data)
    _progress(
        f"loaded {len(dataset)} sketches in {len(dataset.categories)} categories; "
        f"kernel={config.kernel} augment={config.augment_train} seed={config.seed}"
    )
    result = train_pipeline(dataset, config)
    save_model(result.classifier, args.model_out)
    print("cross-validation (mean accuracy per candidate):")
    for row in result.cv_table:
        gamma = "-" if row["gamma"] is None else f"{row['gamma']:.6g}"
        print(f"  C={row['C']:<8g} gamma={gamma:<10} acc={row['mean_accuracy']:.4f}")
    best_c, best_gamma = result.best_params
    gamma = "-" if best_gamma is None else f"{best_gamma:.6g}"
    print(f"selected: C={best_c:g} gamma={gamma}")
    print(
        f"test accuracy: {result.report.accuracy:.4f} "
        f"({result.n_train} train / {result.n_test} test sketches)"
    )
    _progress(f"model written to {args.model_out}")
    return 0


def cmd_eval(args) -> int:
    clf = load_model(args.model)
    dataset = load_dataset(args.data)
    X = np.stack([dilated_canvas(s, clf.side) for s in dataset.sketches])
    y = [s.category for s in dataset.sketches]
    report = evaluate(clf, X, y)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _load_stub_labels(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read stub labels {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"stub labels {path} must be a JSON object of id -> bit list")
    return data


def cmd_epitome(args) -> int:
    dataset = load_dataset(args.data)
    results = []
    if args.stub_labels is not None:
        stubs = _load_stub_labels(args.stub_labels)
        side = load_config(args.config).side
        for sketch in dataset.sketches:
            if sketch.id not in stubs:
                raise DataError(f"no stub labels for sketch {sketch.id!r}")
            labels = stubs[sketch.id]
            if len(labels) != sketch.n_strokes:
                raise DataError(
                    f"sketch {sketch.id!r}: {len(labels)} stub labels for "
                    f"{sketch.n_strokes} strokes"
                )
            results.append(epitome.result_from_labels(sketch.id, sketch.category, labels))
    else:
        if args.model is None:
            raise _UsageError("epitome requires --model (or --stub-labels)")
        clf = load_model(args.model)
        side = clf.side
        results = epitome.extract_epitomes(clf, dataset.sketches)

    out = Path(args.results_out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    epitome.write_results_ndjson(results, out)
    write_effective_config(load_config(args.config), Path(f"{out}.config.json"))

    if args.dump_canvases:
        dump_dir = Path(f"{out}.canvases")
        dump_dir.mkdir(parents=True, exist_ok=True)
        by_id = {s.id: s for s in dataset.sketches}
        for r in results:
            if not r.epitomizable:
                continue
            canvases = epitome.cumulative_canvases(by_id[r.sketch_id], side)
            raster.write_pgm(canvases[r.e - 1], dump_dir / f"{r.sketch_id}_e{r.e}.pgm")

    skipped = sum(1 for r in results if not r.epitomizable)
    _progress(
        f"extracted {len(results)} results ({skipped} not epitomizable) into {out}"
    )
    return 0


def _parse_cutoffs(text: str) -> list[float]:
    try:
        cutoffs = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise _UsageError(f"bad --cutoffs value {text!r}") from exc
    if not cutoffs:
        raise _UsageError("--cutoffs must list at least one value")
    return cutoffs


def _parse_thresholds(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError(f"--thresholds must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(v) for v in parts)
    except ValueError as exc:
        raise _UsageError(f"bad --thresholds value {text!r}") from exc
    if step <= 0 or stop < start:
        raise _UsageError("--thresholds needs stop >= start and step > 0")
    count = int(round((stop - start) / step)) + 1
    values = [min(start + i * step, stop) for i in range(count)]
    return values


def cmd_analyze(args) -> int:
    results = epitome.read_results_ndjson(args.results)
    cutoffs = _parse_cutoffs(args.cutoffs)
    thresholds = _parse_thresholds(args.thresholds)
    stats = analysis.category_stats(results)
    curves = analysis.exceedance_curves(results, thresholds)
    headline = analysis.headline_fractions(stats, cutoffs)
    analysis.emit_report(stats, curves, args.out_dir, headline=headline)
    write_effective_config(load_config(None), Path(args.out_dir) / "effective_config.json")
    for h in headline:
        print(
            f"median below {h.cutoff:g}: {h.numerator}/{h.denominator} "
            f"categories ({h.fraction:.2%})"
        )
    _progress(f"report written into {args.out_dir}")
    return 0


# --- selftest ----------------------------------------------------------------


def _selftest_suffix_products() -> None:
    from itertools import product as iproduct

    def oracle(labels):
        last_zero = -1
        for i, b in enumerate(labels):
            if b == 0:
                last_zero = i
        return None if labels[-1] == 0 else (1 if last_zero < 0 else last_zero + 2)

    for n in range(1, 13):
        for bits in iproduct((0, 1), repeat=n):
            got = epitome.epitome_index(epitome.product_sequence(bits))
            if got != oracle(bits):
                raise InvariantError(f"suffix-product mismatch on {bits}")
    rng = np.random.default_rng(98)
    for _ in range(2000):
        bits = tuple(rng.integers(0, 2, size=rng.integers(1, 257)).tolist())
        got = epitome.epitome_index(epitome.product_sequence(bits))
        if got != oracle(bits):
            raise InvariantError(f"suffix-product mismatch on random sequence")


def _selftest_worked_example() -> None:
    labels = (0, 1, 0, 1, 1, 1, 1, 1, 1)
    products = epitome.product_sequence(labels)
    if products != (0, 0, 0, 1, 1, 1, 1, 1, 1):
        raise InvariantError("product sequence of the worked example is wrong")
    e = epitome.epitome_index(products)
    if e != 4 or abs(epitome.epitome_score(e, 9) - 4 / 9) > 1e-12:
        raise InvariantError("worked example index/score mismatch")


def _selftest_morphology() -> None:
    rng = np.random.default_rng(11)
    for _ in range(5):
        canvas = (rng.random((32, 32)) < 0.3).astype(np.uint8)
        dilated = raster.dilate(canvas)
        if (canvas & ~dilated).any():
            raise InvariantError("dilation is not extensive")
        brute = np.zeros_like(canvas)
        for r in range(32):
            for c in range(32):
                r0, r1 = max(0, r - 2), min(32, r + 3)
                c0, c1 = max(0, c - 2), min(32, c + 3)
                brute[r, c] = canvas[r0:r1, c0:c1].any()
        if not np.array_equal(dilated, brute):
            raise InvariantError("dilation differs from the neighborhood oracle")
        if not np.array_equal(raster.mirror(raster.mirror(canvas)), canvas):
            raise InvariantError("mirror is not an involution")


def _selftest_em_monotone() -> None:
    from .features import DiagonalGmm

    rng = np.random.default_rng(5)
    for run in range(5):
        X = np.concatenate(
            [rng.normal(loc=4.0 * j, scale=1.0, size=(60, 3)) for j in range(2)]
        )
        gmm = DiagonalGmm(2, seed=run).fit(X)
        trace = gmm.log_likelihood_trace_
        if np.any(np.diff(trace) < -1e-9):
            raise InvariantError("EM log-likelihood decreased")


def _selftest_score_contract() -> None:
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        e = int(rng.integers(1, n + 1))
        score = epitome.epitome_score(e, n)
        if (score == 0.0) != (e == 1) or not (0.0 <= score <= 1.0):
            raise InvariantError(f"score contract violated for e={e}, n={n}")


def cmd_selftest(args) -> int:
    suites = [
        ("suffix-product index oracle", _selftest_suffix_products),
        ("worked example", _selftest_worked_example),
        ("morphology laws", _selftest_morphology),
        ("EM monotonicity", _selftest_em_monotone),
        ("score contract", _selftest_score_contract),
    ]
    failed = 0
    for name, fn in suites:
        try:
            fn()
        except InvariantError as exc:
            print(f"FAIL {name}: {exc}")
            failed += 1
        else:
            print(f"ok   {name}")
    if failed:
        print(f"{failed} suite(s) failed", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
