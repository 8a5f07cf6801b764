import json

import numpy as np
import pytest

from sketchepitome.sketch_io import Dataset, Sketch


@pytest.fixture
def cup_sketch():
    return Sketch(
        id="cup0",
        category="cup",
        extent=(800.0, 800.0),
        strokes=(((0.0, 0.0), (10.0, 10.0)),),
    )


def make_sketch(sketch_id="s", category="cat", n_strokes=3, extent=800.0, seed=0):
    """Small random sketch with the requested stroke count."""
    rng = np.random.default_rng(seed)
    strokes = []
    for _ in range(n_strokes):
        n_pts = int(rng.integers(2, 6))
        pts = rng.uniform(0, extent, size=(n_pts, 2))
        strokes.append(tuple((float(x), float(y)) for x, y in pts))
    return Sketch(
        id=sketch_id, category=category, extent=(extent, extent), strokes=tuple(strokes)
    )


@pytest.fixture
def random_sketch_factory():
    return make_sketch


def make_dataset(categories=("a", "b"), per_category=3, seed=0):
    sketches = []
    for ci, cat in enumerate(categories):
        for i in range(per_category):
            sketches.append(
                make_sketch(f"{cat}_{i:03d}", cat, n_strokes=2 + (i % 3), seed=seed + ci * 1000 + i)
            )
    return Dataset(tuple(sketches))


@pytest.fixture
def dataset_factory():
    return make_dataset


def write_json_dataset(dataset, root):
    from sketchepitome.sketch_io import serialize_sketch

    for s in dataset.sketches:
        d = root / s.category
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{s.id}.json").write_text(serialize_sketch(s), encoding="utf-8")
    return root


@pytest.fixture
def json_dataset_writer():
    return write_json_dataset


class StubCanvasClassifier:
    """Minimal stand-in exposing the surface the extraction stage needs."""

    def __init__(self, labels_by_call=None, always=None, categories=("a", "b"), side=64):
        self.classes_ = np.asarray(categories, dtype=object)
        self.side = side
        self.always = always
        self.labels_by_call = list(labels_by_call or [])
        self.calls = 0

    def predict_canvas(self, canvas):
        if self.always is not None:
            answer = self.always
        else:
            answer = self.labels_by_call[self.calls]
        self.calls += 1
        scores = np.zeros(len(self.classes_))
        scores[list(self.classes_).index(answer)] = 1.0
        return answer, scores


@pytest.fixture
def stub_classifier_factory():
    return StubCanvasClassifier


@pytest.fixture
def fig_example_labels():
    return (0, 1, 0, 1, 1, 1, 1, 1, 1)


def write_stub_labels(path, mapping):
    path.write_text(json.dumps(mapping), encoding="utf-8")
    return path
