"""Bridge real prompt-based counting models to the benchmark harness.

The adapter consumes plan JSONL files and emits prediction JSONL plus DMAP
density files, nothing else; it never computes metrics and shares no code
with the harness.
"""

from .dmap import DmapFormatError, decode_dmap, encode_dmap, grid_to_flat
from .runner import (
    AdapterConfigError,
    AdapterError,
    AdapterRunError,
    AdapterSummary,
    PlanJob,
    load_image_paths,
    load_plan_jobs,
    resolve_entrypoint,
    run_adapter,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterConfigError",
    "AdapterError",
    "AdapterRunError",
    "AdapterSummary",
    "DmapFormatError",
    "PlanJob",
    "decode_dmap",
    "encode_dmap",
    "grid_to_flat",
    "load_image_paths",
    "load_plan_jobs",
    "resolve_entrypoint",
    "run_adapter",
    "__version__",
]
