"""Metric computation over scored prediction sets.

Two scored-set shapes feed the metrics. The negative test scores each image
against its own class (the positive prediction) and against absent classes
(negative predictions). The mosaic test scores ordered image pairs whose
model output was split at the seam into a positive-half and negative-half
count.

Aggregation runs in 64-bit floating point with pairwise summation so
million-record runs stay accurate. All operations are pure over immutable
inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import DriftSummary, InputError, MetricsReport


def _check_count(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InputError(f"{what} must be a finite non-negative real, got {value}")
    return value


@dataclass(frozen=True)
class NegativeImageScores:
    """All scored prompts for one image in the negative test.

    positive is the count under the image's own class; negatives maps each
    absent prompt class to its count. gt_count must be positive because the
    normalized metrics divide by it.
    """

    image_id: str
    gt_count: int
    positive: float
    negatives: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if self.gt_count < 1:
            raise InputError(f"image {self.image_id}: gt_count must be >= 1, got {self.gt_count}")
        object.__setattr__(self, "positive", _check_count(self.positive, f"image {self.image_id} positive count"))
        if not self.negatives:
            raise InputError(f"image {self.image_id} has zero negative predictions")
        cleaned = []
        seen = set()
        for prompt, count in self.negatives:
            if prompt in seen:
                raise InputError(f"image {self.image_id}: duplicate negative prompt {prompt!r}")
            seen.add(prompt)
            cleaned.append((prompt, _check_count(count, f"image {self.image_id} negative {prompt!r}")))
        object.__setattr__(self, "negatives", tuple(cleaned))

    def negative_mean(self) -> float:
        return float(np.mean(np.array([c for _, c in self.negatives], dtype=np.float64)))


@dataclass(frozen=True)
class NegativeScoredSet:
    """Negative-test scores for a set of images, one entry per image."""

    images: tuple[NegativeImageScores, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        seen = set()
        for img in self.images:
            if img.image_id in seen:
                raise InputError(f"duplicate image in scored set: {img.image_id}")
            seen.add(img.image_id)

    def __len__(self) -> int:
        return len(self.images)

    def diagonal(self) -> dict[str, float]:
        """image_id -> positive-prompt count."""
        return {img.image_id: img.positive for img in self.images}


@dataclass(frozen=True)
class MosaicPairScore:
    """Split counts for one mosaic: positive half, negative half, and the
    ground truth of the top image."""

    pos_image_id: str
    neg_image_id: str
    c_pos: float
    c_neg: float
    gt_count: int

    def __post_init__(self):
        if self.pos_image_id == self.neg_image_id:
            raise InputError(f"mosaic pair repeats image {self.pos_image_id}")
        if self.gt_count < 1:
            raise InputError(
                f"pair ({self.pos_image_id}, {self.neg_image_id}): gt_count must be >= 1"
            )
        label = f"pair ({self.pos_image_id}, {self.neg_image_id})"
        object.__setattr__(self, "c_pos", _check_count(self.c_pos, f"{label} c_pos"))
        object.__setattr__(self, "c_neg", _check_count(self.c_neg, f"{label} c_neg"))


@dataclass(frozen=True)
class MosaicScoredSet:
    """Mosaic-test scores, one entry per scored ordered pair."""

    pairs: tuple[MosaicPairScore, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        seen = set()
        for p in self.pairs:
            key = (p.pos_image_id, p.neg_image_id)
            if key in seen:
                raise InputError(f"duplicate mosaic pair: {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)


def nmn(s: NegativeScoredSet) -> float:
    """Mean negative-prompt count normalized by each image's ground truth.

    Per image: (mean over scored negative prompts) / gt. The result is the
    mean of those ratios; 0 for an ideal model, 1 for a model that answers
    the positive count regardless of prompt.
    """
    if not s.images:
        raise InputError("cannot compute nmn over an empty scored set")
    ratios = np.array([img.negative_mean() / img.gt_count for img in s.images], dtype=np.float64)
    return float(np.mean(ratios))


def pccn(s: NegativeScoredSet) -> float:
    """Percent of images whose positive count beats the mean negative count.

    An image scores when |positive - gt| is strictly less than
    |mean(negatives) - gt|; ties count against the model.
    """
    if not s.images:
        raise InputError("cannot compute pccn over an empty scored set")
    hits = [
        1.0 if abs(img.positive - img.gt_count) < abs(img.negative_mean() - img.gt_count) else 0.0
        for img in s.images
    ]
    return 100.0 * float(np.mean(np.array(hits, dtype=np.float64)))


def tp_fp_fn(c_pos, c_neg, gt):
    """Counting true/false positives and false negatives for one mosaic.

    tp = min(c_pos, gt): predicted positive-half count capped by what is
    actually there. fp = overshoot above gt plus everything counted in the
    negative half. fn = shortfall below gt. Works over any numeric type
    (float, int, Fraction) and satisfies tp + fn == gt and
    tp + fp == c_pos + c_neg identically.
    """
    tp = min(c_pos, gt)
    fp = max(c_pos - gt, 0) + c_neg
    fn = max(gt - c_pos, 0)
    return tp, fp, fn


def pair_precision_recall(c_pos, c_neg, gt):
    """Precision and recall for a single mosaic pair.

    precision = min(c_pos, gt) / (c_pos + c_neg), defined as 1 when the
    model predicted nothing at all (no prediction, no false positives);
    recall = min(c_pos, gt) / gt.
    """
    tp = min(c_pos, gt)
    denom = c_pos + c_neg
    precision = 1.0 if denom == 0 else tp / denom
    recall = tp / gt
    return precision, recall


def cnt_precision_recall(s: MosaicScoredSet) -> tuple[float, float]:
    """Mean per-pair counting precision and recall over scored pairs."""
    if not s.pairs:
        raise InputError("cannot compute counting precision/recall over an empty scored set")
    pr = [pair_precision_recall(p.c_pos, p.c_neg, p.gt_count) for p in s.pairs]
    precisions = np.array([p for p, _ in pr], dtype=np.float64)
    recalls = np.array([r for _, r in pr], dtype=np.float64)
    return float(np.mean(precisions)), float(np.mean(recalls))


def cnt_f1(cnt_p: float, cnt_r: float) -> float:
    """Harmonic mean of counting precision and recall; 0 when both are 0."""
    total = cnt_p + cnt_r
    if total == 0:
        return 0.0
    return 2.0 * cnt_p * cnt_r / total


def cnt_f1_per_mosaic(s: MosaicScoredSet) -> float:
    """Mean over pairs of each pair's own precision/recall harmonic mean.

    This differs from cnt_f1 of the aggregate means; reports carry both.
    """
    if not s.pairs:
        raise InputError("cannot compute counting F1 over an empty scored set")
    values = np.array(
        [cnt_f1(*pair_precision_recall(p.c_pos, p.c_neg, p.gt_count)) for p in s.pairs],
        dtype=np.float64,
    )
    return float(np.mean(values))


def mae_rmse(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Mean absolute error and root-mean-square error over (predicted, gt)."""
    if not pairs:
        raise InputError("cannot compute mae/rmse over an empty list")
    diffs = np.array([float(p) - float(g) for p, g in pairs], dtype=np.float64)
    mae = float(np.mean(np.abs(diffs)))
    rmse = float(math.sqrt(np.mean(diffs * diffs)))
    return mae, rmse


def drift_stats(neg_diag: Mapping[str, float], mosaic: MosaicScoredSet) -> DriftSummary:
    """Distribution of |c_pos - positive-prompt count| / positive-prompt count.

    Measures how much a mosaic's bottom image drags the model's estimate of
    the top image away from what the model said on the plain image. Pairs
    whose reference count is missing or zero are skipped (the ratio is
    undefined) and listed in the summary.
    """
    values: list[float] = []
    keyed: list[tuple[str, str, float]] = []
    skipped: list[tuple[str, str]] = []
    for p in mosaic.pairs:
        reference = neg_diag.get(p.pos_image_id)
        if reference is None or reference <= 0:
            skipped.append((p.pos_image_id, p.neg_image_id))
            continue
        drift = abs(p.c_pos - reference) / reference
        if not math.isfinite(drift):
            # reference too small for the ratio to fit in a float
            skipped.append((p.pos_image_id, p.neg_image_id))
            continue
        values.append(drift)
        keyed.append((p.pos_image_id, p.neg_image_id, drift))
    if not values:
        raise InputError("no drift values computable: every pair lacked a positive reference")
    arr = np.array(values, dtype=np.float64)
    q1, median, q3 = (float(q) for q in np.percentile(arr, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo = float(arr.min())
    hi = float(arr.max())
    whisker_low = max(lo, q1 - 1.5 * iqr)
    whisker_high = min(hi, q3 + 1.5 * iqr)
    outliers = tuple(
        sorted(
            (pos, neg, v)
            for pos, neg, v in keyed
            if v < whisker_low or v > whisker_high
        )
    )
    return DriftSummary(
        mean=float(np.mean(arr)),
        median=median,
        q1=q1,
        q3=q3,
        whisker_low=whisker_low,
        whisker_high=whisker_high,
        outliers=outliers,
        skipped=tuple(sorted(skipped)),
        n_values=len(values),
    )


def build_report(
    negative: Optional[NegativeScoredSet] = None,
    mosaic: Optional[MosaicScoredSet] = None,
    *,
    n_unmatched: int = 0,
    n_orphans: int = 0,
    config_fingerprint: str = "",
    notes: Sequence[str] = (),
) -> MetricsReport:
    """Compute every metric applicable to the scored sets handed in.

    Metrics whose test was not scored stay None. Drift is computed only
    when both tests are present and at least one pair has a usable
    positive-prompt reference.
    """
    if negative is None and mosaic is None:
        raise InputError("nothing to report: no scored sets")
    notes = list(notes)
    nmn_v = pccn_v = mae_v = rmse_v = None
    cnt_p_v = cnt_r_v = f1_pm = f1_agg = None
    drift = None
    n_jobs = 0
    if negative is not None:
        nmn_v = nmn(negative)
        pccn_v = pccn(negative)
        mae_v, rmse_v = mae_rmse([(img.positive, img.gt_count) for img in negative.images])
        n_jobs += sum(1 + len(img.negatives) for img in negative.images)
        notes.append("negative-prompt means are taken over the scored negative prompts per image")
    if mosaic is not None:
        cnt_p_v, cnt_r_v = cnt_precision_recall(mosaic)
        f1_pm = cnt_f1_per_mosaic(mosaic)
        f1_agg = cnt_f1(cnt_p_v, cnt_r_v)
        n_jobs += len(mosaic)
    if negative is not None and mosaic is not None:
        try:
            drift = drift_stats(negative.diagonal(), mosaic)
        except InputError as exc:
            notes.append(f"drift skipped: {exc}")
    image_ids = set()
    if negative is not None:
        image_ids.update(img.image_id for img in negative.images)
    if mosaic is not None:
        image_ids.update(p.pos_image_id for p in mosaic.pairs)
    return MetricsReport(
        nmn=nmn_v,
        pccn=pccn_v,
        cnt_p=cnt_p_v,
        cnt_r=cnt_r_v,
        cnt_f1=f1_pm,
        cnt_f1_aggregate=f1_agg,
        mae=mae_v,
        rmse=rmse_v,
        drift=drift,
        n_images=len(image_ids),
        n_jobs_scored=n_jobs,
        n_unmatched=n_unmatched,
        n_orphans=n_orphans,
        config_fingerprint=config_fingerprint,
        notes=tuple(notes),
    )
