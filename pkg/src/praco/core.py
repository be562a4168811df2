"""Domain types shared by every module of the harness.

All types here are immutable after construction and safe to share across
concurrent readers. Images are referenced by path only; pixel data never
lives in these types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence


class HarnessError(Exception):
    """Base class for every error raised by this package."""


class InputError(HarnessError):
    """Invalid data handed to an operation."""


class ConfigError(HarnessError):
    """Invalid configuration (bad flag combination or plan settings)."""


class FormatError(HarnessError):
    """Malformed serialized payload.

    offset is the byte offset of the violation when one is known; message
    keeps the bare text so callers can re-wrap it with file context.
    """

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.message = message
        self.offset = offset


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset image: its positive class, count, and optional dot annotations.

    gt_count is authoritative; points are auxiliary (metrics only need counts).
    class_count_in_image is the number of distinct object classes visible in
    the image and defaults to 1 (single-class images are the normal case).
    """

    image_id: str
    image_path: str
    class_name: str
    gt_count: int
    points: Optional[tuple[tuple[float, float], ...]] = None
    class_count_in_image: int = 1

    def __post_init__(self):
        if not self.image_id:
            raise InputError("image_id must be a non-empty string")
        if isinstance(self.gt_count, bool) or not isinstance(self.gt_count, int):
            raise InputError(f"entry {self.image_id}: gt_count must be an integer")
        if self.gt_count < 0:
            raise InputError(f"entry {self.image_id}: gt_count must be non-negative")
        if isinstance(self.class_count_in_image, bool) or not isinstance(self.class_count_in_image, int):
            raise InputError(f"entry {self.image_id}: class_count_in_image must be an integer")
        if self.class_count_in_image < 1:
            raise InputError(f"entry {self.image_id}: class_count_in_image must be >= 1")
        if self.points is not None:
            pts = tuple((float(x), float(y)) for x, y in self.points)
            for x, y in pts:
                if not (math.isfinite(x) and math.isfinite(y)):
                    raise InputError(f"entry {self.image_id}: non-finite point coordinate ({x}, {y})")
            object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Manifest:
    """The dataset index: one entry per image, one positive class per entry.

    Construction is permissive so that broken manifests can be represented
    and reported; use validate_manifest to check the invariants.
    """

    entries: tuple[ManifestEntry, ...]
    split_name: str = ""
    source_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def by_id(self) -> dict[str, ManifestEntry]:
        """image_id -> entry; first occurrence wins if ids are duplicated."""
        index: dict[str, ManifestEntry] = {}
        for entry in self.entries:
            index.setdefault(entry.image_id, entry)
        return index

    def class_names(self) -> list[str]:
        """Distinct class names, sorted."""
        return sorted({e.class_name for e in self.entries})


def validate_manifest(manifest: Manifest, image_root: Optional[Path] = None) -> list[str]:
    """Check every Manifest invariant; return a description per violation.

    An empty list means the manifest is valid. Violations are data, not
    failures. Point-in-bounds checks run only when image_root is given and
    the referenced image file actually opens.
    """
    violations: list[str] = []
    seen: set[str] = set()
    for entry in manifest.entries:
        if entry.image_id in seen:
            violations.append(f"duplicate image_id: {entry.image_id}")
        seen.add(entry.image_id)
        if not entry.class_name:
            violations.append(f"entry {entry.image_id}: empty class_name")
        if entry.gt_count < 1:
            violations.append(f"entry {entry.image_id}: gt_count must be >= 1, got {entry.gt_count}")
        if entry.points is not None and len(entry.points) != entry.gt_count:
            violations.append(
                f"entry {entry.image_id}: {len(entry.points)} points but gt_count {entry.gt_count}"
            )
        if image_root is not None and entry.points:
            size = _try_image_size(Path(image_root) / entry.image_path)
            if size is not None:
                w, h = size
                for i, (x, y) in enumerate(entry.points):
                    if not (0 <= x < w and 0 <= y < h):
                        violations.append(
                            f"entry {entry.image_id}: point {i} at ({x}, {y}) outside image bounds {w}x{h}"
                        )
    return violations


def _try_image_size(path: Path) -> Optional[tuple[int, int]]:
    if not path.is_file():
        return None
    try:
        from PIL import Image

        with Image.open(path) as img:
            return img.size
    except Exception:
        return None


@dataclass(frozen=True, eq=False)
class DensityMap:
    """A 2-D real grid whose integral over a region estimates an object count.

    Values are stored as read-only float32 (the wire precision); construction
    casts and rejects NaN/Inf, including float64 values that overflow float32.
    """

    values: "object"

    def __post_init__(self):
        import numpy as np

        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise InputError(f"density map must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"density map must have positive dimensions, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("density map contains NaN or infinite values")
        with np.errstate(over="ignore"):
            arr = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise InputError("density map values exceed float32 range")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class NegativeJob:
    """One negative-test inference: prompt image_id with prompt_class."""

    image_id: str
    prompt_class: str
    is_positive: bool

    @property
    def key(self) -> tuple[str, str, str]:
        return ("negative", self.image_id, self.prompt_class)


@dataclass(frozen=True)
class MosaicJob:
    """One mosaic-test inference: positive image stacked on a negative one.

    mosaic_path and boundary_row are filled once the mosaic is composed;
    boundary_row is the first pixel row belonging to the negative image.
    """

    pos_image_id: str
    neg_image_id: str
    prompt_class: str
    mosaic_path: Optional[str] = None
    boundary_row: Optional[int] = None

    def __post_init__(self):
        if self.pos_image_id == self.neg_image_id:
            raise InputError(f"mosaic job pairs an image with itself: {self.pos_image_id}")
        if self.boundary_row is not None:
            if isinstance(self.boundary_row, bool) or not isinstance(self.boundary_row, int):
                raise InputError("boundary_row must be an integer")
            if self.boundary_row < 1:
                raise InputError(f"boundary_row must be positive, got {self.boundary_row}")

    @property
    def key(self) -> tuple[str, str, str]:
        return ("mosaic", self.pos_image_id, self.neg_image_id)


_COUNT_FIELDS = ("count", "c_pos", "c_neg")


@dataclass(frozen=True)
class PredictionRecord:
    """One model answer keyed to a plan job.

    Exactly one answer form must be populated:
      - count            (negative test, scalar)
      - c_pos and c_neg  (mosaic test, already split)
      - density_ref      (either test; path to a density-map file)

    mosaic_path and boundary_row may echo the plan job's fields; for a mosaic
    density_ref they supply the seam when the plan itself does not carry it.
    """

    test: str
    image_id: Optional[str] = None
    pos_image_id: Optional[str] = None
    neg_image_id: Optional[str] = None
    prompt_class: Optional[str] = None
    count: Optional[float] = None
    c_pos: Optional[float] = None
    c_neg: Optional[float] = None
    density_ref: Optional[str] = None
    is_positive: Optional[bool] = None
    mosaic_path: Optional[str] = None
    boundary_row: Optional[int] = None

    def __post_init__(self):
        if self.test not in ("negative", "mosaic"):
            raise InputError(f"record test must be 'negative' or 'mosaic', got {self.test!r}")
        if not self.prompt_class:
            raise InputError("record is missing prompt_class")
        if self.test == "negative":
            if not self.image_id:
                raise InputError("negative record is missing image_id")
            if self.pos_image_id or self.neg_image_id:
                raise InputError(f"negative record {self.image_id} carries mosaic identity fields")
        else:
            if not self.pos_image_id or not self.neg_image_id:
                raise InputError("mosaic record is missing pos_image_id/neg_image_id")
            if self.image_id:
                raise InputError("mosaic record carries a negative-test image_id field")
            if self.is_positive is not None:
                raise InputError("mosaic record carries a negative-test is_positive field")

        count_form = self.count is not None
        pair_form = self.c_pos is not None or self.c_neg is not None
        density_form = self.density_ref is not None
        populated = sum((count_form, pair_form, density_form))
        if populated != 1:
            raise InputError(
                f"record {self.key} must populate exactly one of count, (c_pos, c_neg), "
                f"density_ref; got {populated} forms"
            )
        if pair_form and (self.c_pos is None or self.c_neg is None):
            raise InputError(f"record {self.key} populates only one of c_pos/c_neg")
        if count_form and self.test != "negative":
            raise InputError(f"record {self.key}: scalar count is only valid for the negative test")
        if pair_form and self.test != "mosaic":
            raise InputError(f"record {self.key}: (c_pos, c_neg) is only valid for the mosaic test")
        for name in _COUNT_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            value = float(value)
            if not math.isfinite(value) or value < 0:
                raise InputError(f"record {self.key}: {name} must be a finite non-negative real")
            object.__setattr__(self, name, value)

    @property
    def key(self) -> tuple[str, ...]:
        if self.test == "negative":
            return ("negative", self.image_id or "", self.prompt_class or "")
        return ("mosaic", self.pos_image_id or "", self.neg_image_id or "")


@dataclass(frozen=True)
class DriftSummary:
    """Five-number summary of the correct-count drift distribution.

    Whiskers sit at q1 - 1.5*IQR and q3 + 1.5*IQR, clipped to the observed
    data range; outliers are the (pos, neg, drift) triples outside them.
    Pairs whose reference count was zero or missing are listed in skipped.
    """

    mean: float
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[tuple[str, str, float], ...] = ()
    skipped: tuple[tuple[str, str], ...] = ()
    n_values: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "outliers", tuple((str(p), str(n), float(v)) for p, n, v in self.outliers)
        )
        object.__setattr__(self, "skipped", tuple((str(p), str(n)) for p, n in self.skipped))
        for name in ("mean", "median", "q1", "q3", "whisker_low", "whisker_high"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"drift summary field {name} is not finite")
        eps = 1e-9
        if not (self.q1 <= self.median + eps and self.median <= self.q3 + eps):
            raise InputError(
                f"drift quartiles out of order: q1={self.q1} median={self.median} q3={self.q3}"
            )
        if self.whisker_low > self.q1 + eps or self.whisker_high < self.q3 - eps:
            raise InputError("drift whiskers must bracket the quartiles")
        for pos, neg, value in self.outliers:
            if self.whisker_low <= value <= self.whisker_high:
                raise InputError(
                    f"outlier ({pos}, {neg}, {value}) lies inside the whiskers "
                    f"[{self.whisker_low}, {self.whisker_high}]"
                )


@dataclass(frozen=True)
class MetricsReport:
    """Every computed metric for one evaluated model, plus provenance.

    Metric fields are None when the corresponding test was not scored.
    cnt_f1 is the mean of per-mosaic F1 values; cnt_f1_aggregate is the
    harmonic mean of the aggregate precision and recall (the two differ).
    """

    nmn: Optional[float] = None
    pccn: Optional[float] = None
    cnt_p: Optional[float] = None
    cnt_r: Optional[float] = None
    cnt_f1: Optional[float] = None
    cnt_f1_aggregate: Optional[float] = None
    mae: Optional[float] = None
    rmse: Optional[float] = None
    drift: Optional[DriftSummary] = None
    n_images: int = 0
    n_jobs_scored: int = 0
    n_unmatched: int = 0
    n_orphans: int = 0
    config_fingerprint: str = ""
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        eps = 1e-9
        for name in ("nmn", "pccn", "cnt_p", "cnt_r", "cnt_f1", "cnt_f1_aggregate", "mae", "rmse"):
            value = getattr(self, name)
            if value is None:
                continue
            value = float(value)
            if not math.isfinite(value):
                raise InputError(f"report field {name} is not finite")
            object.__setattr__(self, name, value)
        if self.nmn is not None and self.nmn < -eps:
            raise InputError(f"nmn must be >= 0, got {self.nmn}")
        if self.pccn is not None and not (-eps <= self.pccn <= 100 + eps):
            raise InputError(f"pccn must lie in [0, 100], got {self.pccn}")
        for name in ("cnt_p", "cnt_r", "cnt_f1", "cnt_f1_aggregate"):
            value = getattr(self, name)
            if value is not None and not (-eps <= value <= 1 + eps):
                raise InputError(f"{name} must lie in [0, 1], got {value}")
        if self.mae is not None and self.rmse is not None and self.rmse < self.mae - eps:
            raise InputError(f"rmse ({self.rmse}) must be >= mae ({self.mae})")
        if self.cnt_f1 is not None and self.cnt_p is not None and self.cnt_r is not None:
            if self.cnt_f1 > 2 * min(self.cnt_p, self.cnt_r) + eps:
                raise InputError("cnt_f1 exceeds the harmonic-mean bound 2*min(cnt_p, cnt_r)")
