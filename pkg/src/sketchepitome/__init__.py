"""Sparse, discriminative stroke-prefix extraction for freehand sketches.

The pipeline: canonical sketch files -> binary canvases (rasterize +
dilate) -> orientation-histogram descriptors -> PCA -> diagonal GMM ->
Fisher vectors -> one-vs-rest SVM. A trained classifier then labels every
cumulative stroke prefix of a sketch; the earliest prefix whose successors
are all correctly classified is the sketch's minimal discriminative
representation, and its index over the stroke count scores the sketch's
sparseness.
"""

from .analysis import (
    CategoryStats,
    ExceedanceCurve,
    HeadlineFraction,
    category_stats,
    emit_report,
    exceedance_curves,
    headline_fractions,
)
from .classifier import (
    EvalReport,
    LinearSvmOvr,
    RbfSvmOvr,
    SketchClassifier,
    TrainResult,
    cross_validate,
    dilated_canvas,
    evaluate,
    load_model,
    save_model,
    stratified_folds,
    train_pipeline,
)
from .config import PipelineConfig, load_config
from .epitome import (
    EpitomeResult,
    cumulative_canvases,
    epitome_index,
    epitome_score,
    extract_epitome,
    extract_epitomes,
    iter_cumulative_canvases,
    label_sequence,
    product_sequence,
    read_results_ndjson,
    result_from_labels,
    write_results_ndjson,
)
from .errors import ConfigError, DataError, InvariantError, ParseError, SketchEpitomeError
from .features import DescriptorExtractor, DescriptorSet, DiagonalGmm, FisherEncoder, PcaReducer
from .raster import (
    Transform,
    augment,
    battery_manifest,
    dilate,
    mirror,
    rasterize,
    read_pgm,
    rotate,
    shift,
    standard_battery,
    write_pgm,
    zoom,
)
from .sketch_io import (
    Dataset,
    Sketch,
    import_svg,
    load_dataset,
    parse_sketch,
    serialize_sketch,
    split_dataset,
)
from .synthetic import generate_dataset, generate_sketch, write_dataset

__version__ = "0.1.0"
