"""Benchmark harness for prompt-based class-agnostic counting models.

The workflow is file-driven: build a plan from a dataset manifest, run a
model (real or synthetic) over the plan to get prediction records, then
score the records into a metrics report. See the CLI module or README for
the end-to-end commands.
"""

from .core import (
    ConfigError,
    DensityMap,
    DriftSummary,
    FormatError,
    HarnessError,
    InputError,
    Manifest,
    ManifestEntry,
    MetricsReport,
    MosaicJob,
    NegativeJob,
    PredictionRecord,
    validate_manifest,
)
from .density import (
    decode_dmap,
    encode_dmap,
    load_density_file,
    render_from_points,
    save_density_file,
    sum_count,
)
from .metrics import (
    MosaicPairScore,
    MosaicScoredSet,
    NegativeImageScores,
    NegativeScoredSet,
    build_report,
    cnt_f1,
    cnt_f1_per_mosaic,
    cnt_precision_recall,
    drift_stats,
    mae_rmse,
    nmn,
    pair_precision_recall,
    pccn,
    tp_fp_fn,
)
from .mosaic import ComposePolicy, compose_mosaic, map_boundary_to_density_row, split_density
from .plan import (
    PlanConfig,
    build_mosaic_plan,
    build_negative_plan,
    check_plan_against_manifest,
    filter_manifest,
)
from .simulate import SyntheticModelSpec, parse_model_spec, run_synthetic
from .io import (
    LoadedPredictions,
    convert_fsc147,
    fingerprint_config,
    join_predictions,
    load_manifest,
    load_plan,
    load_prediction_records,
    load_predictions,
    load_report_json,
    render_drift_boxplot,
    render_heatmap,
    save_manifest,
    save_plan,
    save_predictions,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DensityMap",
    "DriftSummary",
    "FormatError",
    "HarnessError",
    "InputError",
    "Manifest",
    "ManifestEntry",
    "MetricsReport",
    "MosaicJob",
    "NegativeJob",
    "PredictionRecord",
    "validate_manifest",
    "decode_dmap",
    "encode_dmap",
    "load_density_file",
    "render_from_points",
    "save_density_file",
    "sum_count",
    "MosaicPairScore",
    "MosaicScoredSet",
    "NegativeImageScores",
    "NegativeScoredSet",
    "build_report",
    "cnt_f1",
    "cnt_f1_per_mosaic",
    "cnt_precision_recall",
    "drift_stats",
    "mae_rmse",
    "nmn",
    "pair_precision_recall",
    "pccn",
    "tp_fp_fn",
    "ComposePolicy",
    "compose_mosaic",
    "map_boundary_to_density_row",
    "split_density",
    "PlanConfig",
    "build_mosaic_plan",
    "build_negative_plan",
    "check_plan_against_manifest",
    "filter_manifest",
    "SyntheticModelSpec",
    "parse_model_spec",
    "run_synthetic",
    "LoadedPredictions",
    "convert_fsc147",
    "fingerprint_config",
    "join_predictions",
    "load_manifest",
    "load_plan",
    "load_prediction_records",
    "load_predictions",
    "load_report_json",
    "render_drift_boxplot",
    "render_heatmap",
    "save_manifest",
    "save_plan",
    "save_predictions",
    "write_report",
    "__version__",
]
