"""File formats: manifests, plans, prediction records, reports, heatmaps.

Loaders reject rather than repair malformed input. Error messages carry the
file, the line or byte offset, and the job key where one applies. Relative
paths inside files (density_ref, mosaic_path) resolve against the directory
of the file that mentions them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    DriftSummary,
    FormatError,
    InputError,
    Manifest,
    ManifestEntry,
    MetricsReport,
    MosaicJob,
    NegativeJob,
    PredictionRecord,
    validate_manifest,
)
from .density import load_density_file, sum_count
from .metrics import (
    MosaicPairScore,
    MosaicScoredSet,
    NegativeImageScores,
    NegativeScoredSet,
)
from .mosaic import split_density

FSC147_CONVERTER_VERSION = "fsc147-converter-v1"

_ENTRY_REQUIRED = ("image_id", "image_path", "class_name", "gt_count")
_ENTRY_OPTIONAL = ("points", "class_count_in_image")
_TOP_KEYS = ("split", "source_note", "entries")

_NEG_RECORD_KEYS = {"test", "image_id", "prompt_class", "is_positive", "count", "density_ref"}
_MOS_RECORD_KEYS = {
    "test",
    "pos_image_id",
    "neg_image_id",
    "prompt_class",
    "mosaic_path",
    "boundary_row",
    "c_pos",
    "c_neg",
    "density_ref",
}


# ---------------------------------------------------------------- manifests


def manifest_from_dict(data: dict, where: str = "manifest") -> Manifest:
    """Build a Manifest from the JSON schema; raises on shape violations."""
    if not isinstance(data, dict):
        raise FormatError(f"{where}: top level must be a JSON object")
    unknown = set(data) - set(_TOP_KEYS)
    if unknown:
        raise FormatError(f"{where}: unknown top-level field(s): {sorted(unknown)}")
    if "entries" not in data or not isinstance(data["entries"], list):
        raise FormatError(f"{where}: missing or non-list field 'entries'")
    entries = []
    for i, raw in enumerate(data["entries"]):
        if not isinstance(raw, dict):
            raise FormatError(f"{where}: entry {i}: must be a JSON object")
        unknown = set(raw) - set(_ENTRY_REQUIRED) - set(_ENTRY_OPTIONAL)
        if unknown:
            raise FormatError(f"{where}: entry {i}: unknown field(s): {sorted(unknown)}")
        for key in _ENTRY_REQUIRED:
            if key not in raw:
                raise FormatError(f"{where}: entry {i}: missing field {key}")
        for key in ("image_id", "image_path", "class_name"):
            if not isinstance(raw[key], str):
                raise FormatError(f"{where}: entry {i}: {key} must be a string")
        if isinstance(raw["gt_count"], bool) or not isinstance(raw["gt_count"], int):
            raise FormatError(f"{where}: entry {i}: gt_count must be an integer")
        points = None
        if raw.get("points") is not None:
            if not isinstance(raw["points"], list):
                raise FormatError(f"{where}: entry {i}: points must be a list of [x, y] pairs")
            points = []
            for j, pt in enumerate(raw["points"]):
                if (
                    not isinstance(pt, (list, tuple))
                    or len(pt) != 2
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pt)
                ):
                    raise FormatError(f"{where}: entry {i}: point {j} must be an [x, y] pair")
                points.append((float(pt[0]), float(pt[1])))
            points = tuple(points)
        ccount = raw.get("class_count_in_image", 1)
        if isinstance(ccount, bool) or not isinstance(ccount, int):
            raise FormatError(f"{where}: entry {i}: class_count_in_image must be an integer")
        try:
            entries.append(
                ManifestEntry(
                    image_id=raw["image_id"],
                    image_path=raw["image_path"],
                    class_name=raw["class_name"],
                    gt_count=raw["gt_count"],
                    points=points,
                    class_count_in_image=ccount,
                )
            )
        except InputError as exc:
            raise InputError(f"{where}: entry {i}: {exc}")
    return Manifest(
        entries=tuple(entries),
        split_name=str(data.get("split", "")),
        source_note=str(data.get("source_note", "")),
    )


def manifest_to_dict(m: Manifest) -> dict:
    """Canonical JSON form; optional fields are omitted at their defaults."""
    out: dict = {"split": m.split_name}
    if m.source_note:
        out["source_note"] = m.source_note
    entries = []
    for e in m.entries:
        item: dict = {
            "image_id": e.image_id,
            "image_path": e.image_path,
            "class_name": e.class_name,
            "gt_count": e.gt_count,
        }
        if e.points is not None:
            item["points"] = [[x, y] for x, y in e.points]
        if e.class_count_in_image != 1:
            item["class_count_in_image"] = e.class_count_in_image
        entries.append(item)
    out["entries"] = entries
    return out


def load_manifest(path: Union[str, Path]) -> Manifest:
    """Parse and validate a manifest JSON file; any violation is fatal."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}")
    manifest = manifest_from_dict(data, where=str(path))
    violations = validate_manifest(manifest)
    if violations:
        raise InputError(f"{path}: invalid manifest: " + "; ".join(violations))
    return manifest


def save_manifest(path: Union[str, Path], m: Manifest) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest_to_dict(m), indent=2) + "\n", encoding="utf-8")
    return path


# -------------------------------------------------------------------- plans


def _job_to_dict(job: Union[NegativeJob, MosaicJob]) -> dict:
    if isinstance(job, NegativeJob):
        return {
            "test": "negative",
            "image_id": job.image_id,
            "prompt_class": job.prompt_class,
            "is_positive": job.is_positive,
        }
    return {
        "test": "mosaic",
        "pos_image_id": job.pos_image_id,
        "neg_image_id": job.neg_image_id,
        "prompt_class": job.prompt_class,
        "mosaic_path": job.mosaic_path,
        "boundary_row": job.boundary_row,
    }


def save_plan(path: Union[str, Path], jobs: Sequence[Union[NegativeJob, MosaicJob]]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for job in jobs:
            fh.write(json.dumps(_job_to_dict(job)) + "\n")
    return path


def _require_keys(obj: dict, required: set, allowed: set, where: str) -> None:
    missing = required - set(obj)
    if missing:
        raise FormatError(f"{where}: missing field(s): {sorted(missing)}")
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"{where}: unknown field(s): {sorted(unknown)}")


def _int_or_none(value, where: str, what: str) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, bool):
        raise FormatError(f"{where}: {what} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise FormatError(f"{where}: {what} must be an integer, got {value!r}")


def load_plan(path: Union[str, Path]) -> list[Union[NegativeJob, MosaicJob]]:
    """Parse a plan JSONL file into job objects."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read plan {path}: {exc}")
    jobs: list[Union[NegativeJob, MosaicJob]] = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path} line {n}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{where}: invalid JSON: {exc}")
        if not isinstance(obj, dict):
            raise FormatError(f"{where}: job must be a JSON object")
        test = obj.get("test")
        try:
            if test == "negative":
                _require_keys(
                    obj,
                    {"test", "image_id", "prompt_class", "is_positive"},
                    {"test", "image_id", "prompt_class", "is_positive"},
                    where,
                )
                if not isinstance(obj["is_positive"], bool):
                    raise FormatError(f"{where}: is_positive must be a boolean")
                jobs.append(
                    NegativeJob(str(obj["image_id"]), str(obj["prompt_class"]), obj["is_positive"])
                )
            elif test == "mosaic":
                _require_keys(
                    obj,
                    {"test", "pos_image_id", "neg_image_id", "prompt_class"},
                    {"test", "pos_image_id", "neg_image_id", "prompt_class", "mosaic_path", "boundary_row"},
                    where,
                )
                mosaic_path = obj.get("mosaic_path")
                if mosaic_path is not None and not isinstance(mosaic_path, str):
                    raise FormatError(f"{where}: mosaic_path must be a string")
                jobs.append(
                    MosaicJob(
                        str(obj["pos_image_id"]),
                        str(obj["neg_image_id"]),
                        str(obj["prompt_class"]),
                        mosaic_path=mosaic_path,
                        boundary_row=_int_or_none(obj.get("boundary_row"), where, "boundary_row"),
                    )
                )
            else:
                raise FormatError(f"{where}: test must be 'negative' or 'mosaic', got {test!r}")
        except InputError as exc:
            raise InputError(f"{where}: {exc}")
    return jobs


# -------------------------------------------------------------- predictions


def _record_to_dict(r: PredictionRecord) -> dict:
    if r.test == "negative":
        out = {
            "test": "negative",
            "image_id": r.image_id,
            "prompt_class": r.prompt_class,
            "is_positive": r.is_positive,
            "count": r.count,
            "density_ref": r.density_ref,
        }
    else:
        out = {
            "test": "mosaic",
            "pos_image_id": r.pos_image_id,
            "neg_image_id": r.neg_image_id,
            "prompt_class": r.prompt_class,
            "mosaic_path": r.mosaic_path,
            "boundary_row": r.boundary_row,
            "c_pos": r.c_pos,
            "c_neg": r.c_neg,
            "density_ref": r.density_ref,
        }
    return {k: v for k, v in out.items() if v is not None}


def save_predictions(path: Union[str, Path], records: Sequence[PredictionRecord]) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_dict(record)) + "\n")
    return path


def record_from_dict(obj: dict, where: str = "record") -> PredictionRecord:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: record must be a JSON object")
    test = obj.get("test")
    if test == "negative":
        _require_keys(obj, {"test", "image_id", "prompt_class"}, _NEG_RECORD_KEYS, where)
    elif test == "mosaic":
        _require_keys(obj, {"test", "pos_image_id", "neg_image_id", "prompt_class"}, _MOS_RECORD_KEYS, where)
    else:
        raise FormatError(f"{where}: test must be 'negative' or 'mosaic', got {test!r}")
    for key in ("count", "c_pos", "c_neg"):
        value = obj.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise FormatError(f"{where}: {key} must be a number")
    is_positive = obj.get("is_positive")
    if is_positive is not None and not isinstance(is_positive, bool):
        raise FormatError(f"{where}: is_positive must be a boolean")
    try:
        return PredictionRecord(
            test=test,
            image_id=obj.get("image_id"),
            pos_image_id=obj.get("pos_image_id"),
            neg_image_id=obj.get("neg_image_id"),
            prompt_class=obj.get("prompt_class"),
            count=obj.get("count"),
            c_pos=obj.get("c_pos"),
            c_neg=obj.get("c_neg"),
            density_ref=obj.get("density_ref"),
            is_positive=is_positive,
            mosaic_path=obj.get("mosaic_path"),
            boundary_row=_int_or_none(obj.get("boundary_row"), where, "boundary_row"),
        )
    except InputError as exc:
        raise InputError(f"{where}: {exc}")


def load_prediction_records(path: Union[str, Path]) -> list[PredictionRecord]:
    """Parse a prediction JSONL file without joining it to any plan."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read predictions {path}: {exc}")
    records = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path} line {n}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{where}: invalid JSON: {exc}")
        records.append(record_from_dict(obj, where=where))
    return records


@dataclass(frozen=True)
class LoadedPredictions:
    """Join result: scored sets plus the jobs/records that found no partner."""

    negative: Optional[NegativeScoredSet]
    mosaic: Optional[MosaicScoredSet]
    unmatched: tuple[tuple, ...]
    orphans: tuple[tuple, ...]
    notes: tuple[str, ...]


def _resolve_existing(candidates: list[Path]) -> Optional[Path]:
    for c in candidates:
        if c is not None and c.is_file():
            return c
    return None


def _image_height(path: Path) -> int:
    from PIL import Image

    with Image.open(path) as img:
        return img.size[1]


def resolve_negative_count(record: PredictionRecord, base_dir: Path) -> float:
    """Scalar count for a negative record, integrating its density if needed."""
    if record.count is not None:
        return record.count
    ref = Path(record.density_ref)
    target = ref if ref.is_absolute() else base_dir / ref
    try:
        return sum_count(load_density_file(target))
    except (InputError, FormatError) as exc:
        raise InputError(f"record {record.key}: {exc}")


def resolve_mosaic_counts(
    record: PredictionRecord,
    job: Optional[MosaicJob],
    base_dir: Path,
    plan_base: Optional[Path] = None,
) -> tuple[float, float]:
    """(c_pos, c_neg) for a mosaic record, splitting its density if needed.

    The seam comes from the plan job when it carries one, else from the
    record's echoed boundary_row. The mosaic height comes from the mosaic
    image when a path is known (it must then be readable); with no image,
    the density map is taken to be at mosaic resolution.
    """
    if record.c_pos is not None:
        return record.c_pos, record.c_neg
    boundary = job.boundary_row if (job is not None and job.boundary_row is not None) else record.boundary_row
    if boundary is None:
        raise InputError(
            f"record {record.key}: density_ref form needs a boundary_row from plan or record"
        )
    ref = Path(record.density_ref)
    target = ref if ref.is_absolute() else base_dir / ref
    try:
        d = load_density_file(target)
    except (InputError, FormatError) as exc:
        raise InputError(f"record {record.key}: {exc}")
    mosaic_path = None
    if job is not None and job.mosaic_path:
        mosaic_path = job.mosaic_path
    elif record.mosaic_path:
        mosaic_path = record.mosaic_path
    if mosaic_path:
        raw = Path(mosaic_path)
        found = _resolve_existing(
            [raw]
            if raw.is_absolute()
            else [plan_base / raw if plan_base else None, base_dir / raw, raw]
        )
        if found is None:
            raise InputError(f"record {record.key}: mosaic image {mosaic_path} not found")
        try:
            mosaic_height = _image_height(found)
        except Exception as exc:
            raise InputError(f"record {record.key}: mosaic image {found} unreadable: {exc}")
    else:
        mosaic_height = d.height
    try:
        return split_density(d, boundary, mosaic_height)
    except InputError as exc:
        raise InputError(f"record {record.key}: {exc}")


def join_predictions(
    records_with_base: Sequence[tuple[PredictionRecord, Path]],
    jobs: Sequence[Union[NegativeJob, MosaicJob]],
    manifest: Manifest,
    plan_base: Optional[Path] = None,
    threads: int = 1,
) -> LoadedPredictions:
    """Join records to plan jobs by key and build the scored sets.

    Jobs without a record land in unmatched; records without a job land in
    orphans and are excluded from scoring. A duplicate record for one job
    is an error. Images that end up without a scored positive prompt or
    without any scored negative prompt are dropped from the negative set
    with a note.
    """
    job_index: dict[tuple, Union[NegativeJob, MosaicJob]] = {}
    for job in jobs:
        if job.key in job_index:
            raise InputError(f"plan contains duplicate job {job.key}")
        job_index[job.key] = job

    seen: dict[tuple, PredictionRecord] = {}
    ordered: list[tuple[PredictionRecord, Path]] = []
    for record, base in records_with_base:
        if record.key in seen:
            raise InputError(f"duplicate prediction record for job {record.key}")
        seen[record.key] = record
        ordered.append((record, base))

    matched = [(r, b) for r, b in ordered if r.key in job_index]
    orphans = tuple(sorted(r.key for r, _ in ordered if r.key not in job_index))
    matched_keys = {r.key for r, _ in matched}
    unmatched = tuple(sorted(k for k in job_index if k not in matched_keys))

    def _resolve(item):
        record, base = item
        if record.test == "negative":
            return resolve_negative_count(record, base)
        return resolve_mosaic_counts(record, job_index.get(record.key), base, plan_base)

    if threads > 1 and len(matched) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            resolved = list(ex.map(_resolve, matched))
    else:
        resolved = [_resolve(item) for item in matched]

    notes: list[str] = []
    positives: dict[str, float] = {}
    negatives: dict[str, list[tuple[str, float]]] = {}
    mosaic_pairs: list[MosaicPairScore] = []
    for (record, _), value in zip(matched, resolved):
        job = job_index[record.key]
        if record.test == "negative":
            entry = manifest.by_id.get(record.image_id)
            if entry is None:
                raise InputError(f"record {record.key} references an image absent from the manifest")
            if job.is_positive:
                positives[record.image_id] = value
            else:
                negatives.setdefault(record.image_id, []).append((record.prompt_class, value))
        else:
            entry = manifest.by_id.get(record.pos_image_id)
            if entry is None:
                raise InputError(f"record {record.key} references an image absent from the manifest")
            c_pos, c_neg = value
            mosaic_pairs.append(
                MosaicPairScore(
                    pos_image_id=record.pos_image_id,
                    neg_image_id=record.neg_image_id,
                    c_pos=c_pos,
                    c_neg=c_neg,
                    gt_count=entry.gt_count,
                )
            )

    images = []
    for image_id in sorted(set(positives) | set(negatives)):
        if image_id not in positives:
            notes.append(f"image {image_id} dropped from negative scoring: no positive prediction")
            continue
        if image_id not in negatives:
            notes.append(f"image {image_id} dropped from negative scoring: no negative predictions")
            continue
        images.append(
            NegativeImageScores(
                image_id=image_id,
                gt_count=manifest.by_id[image_id].gt_count,
                positive=positives[image_id],
                negatives=tuple(sorted(negatives[image_id])),
            )
        )
    negative_set = NegativeScoredSet(tuple(images)) if images else None
    mosaic_set = MosaicScoredSet(tuple(mosaic_pairs)) if mosaic_pairs else None
    return LoadedPredictions(
        negative=negative_set,
        mosaic=mosaic_set,
        unmatched=unmatched,
        orphans=orphans,
        notes=tuple(notes),
    )


def load_predictions(
    path: Union[str, Path],
    jobs: Sequence[Union[NegativeJob, MosaicJob]],
    manifest: Manifest,
    plan_base: Optional[Path] = None,
    threads: int = 1,
) -> LoadedPredictions:
    """Load one prediction file and join it against the plan."""
    path = Path(path)
    records = load_prediction_records(path)
    return join_predictions(
        [(r, path.parent) for r in records], jobs, manifest, plan_base=plan_base, threads=threads
    )


# ------------------------------------------------------------------ reports

_CSV_HEADER = "NMN,PCCN,CntP,CntR,CntF1,MAE,RMSE"


def _fmt(value: Optional[float], decimals: int) -> str:
    return "" if value is None else f"{value:.{decimals}f}"


def _metric_row(r: MetricsReport) -> list[str]:
    return [
        _fmt(r.nmn, 2),
        _fmt(r.pccn, 2),
        _fmt(r.cnt_p, 3),
        _fmt(r.cnt_r, 3),
        _fmt(r.cnt_f1, 3),
        _fmt(r.mae, 2),
        _fmt(r.rmse, 2),
    ]


def _drift_line(d: Optional[DriftSummary]) -> str:
    if d is None:
        return "none"
    return (
        f"mean={d.mean!r} median={d.median!r} q1={d.q1!r} q3={d.q3!r} "
        f"whisker_low={d.whisker_low!r} whisker_high={d.whisker_high!r} "
        f"outliers={len(d.outliers)} skipped={len(d.skipped)} n={d.n_values}"
    )


def report_to_dict(r: MetricsReport) -> dict:
    drift = None
    if r.drift is not None:
        drift = {
            "mean": r.drift.mean,
            "median": r.drift.median,
            "q1": r.drift.q1,
            "q3": r.drift.q3,
            "whisker_low": r.drift.whisker_low,
            "whisker_high": r.drift.whisker_high,
            "outliers": [[p, n, v] for p, n, v in r.drift.outliers],
            "skipped": [[p, n] for p, n in r.drift.skipped],
            "n_values": r.drift.n_values,
        }
    return {
        "nmn": r.nmn,
        "pccn": r.pccn,
        "cnt_p": r.cnt_p,
        "cnt_r": r.cnt_r,
        "cnt_f1": r.cnt_f1,
        "cnt_f1_aggregate": r.cnt_f1_aggregate,
        "mae": r.mae,
        "rmse": r.rmse,
        "drift": drift,
        "n_images": r.n_images,
        "n_jobs_scored": r.n_jobs_scored,
        "n_unmatched": r.n_unmatched,
        "n_orphans": r.n_orphans,
        "config_fingerprint": r.config_fingerprint,
        "notes": list(r.notes),
    }


def report_from_dict(data: dict) -> MetricsReport:
    drift = None
    if data.get("drift") is not None:
        d = data["drift"]
        drift = DriftSummary(
            mean=d["mean"],
            median=d["median"],
            q1=d["q1"],
            q3=d["q3"],
            whisker_low=d["whisker_low"],
            whisker_high=d["whisker_high"],
            outliers=tuple((p, n, v) for p, n, v in d.get("outliers", [])),
            skipped=tuple((p, n) for p, n in d.get("skipped", [])),
            n_values=d.get("n_values", 0),
        )
    return MetricsReport(
        nmn=data.get("nmn"),
        pccn=data.get("pccn"),
        cnt_p=data.get("cnt_p"),
        cnt_r=data.get("cnt_r"),
        cnt_f1=data.get("cnt_f1"),
        cnt_f1_aggregate=data.get("cnt_f1_aggregate"),
        mae=data.get("mae"),
        rmse=data.get("rmse"),
        drift=drift,
        n_images=data.get("n_images", 0),
        n_jobs_scored=data.get("n_jobs_scored", 0),
        n_unmatched=data.get("n_unmatched", 0),
        n_orphans=data.get("n_orphans", 0),
        config_fingerprint=data.get("config_fingerprint", ""),
        notes=tuple(data.get("notes", ())),
    )


def load_report_json(path: Union[str, Path]) -> MetricsReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_report(r: MetricsReport, path: Union[str, Path], fmt: str = "json") -> Path:
    """Serialize a report.

    csv and markdown print the seven metric columns in fixed order with 2
    decimals for NMN/PCCN/MAE/RMSE and 3 for CntP/CntR/CntF1; json keeps
    full precision and loads back into an equal MetricsReport.
    """
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report_to_dict(r), indent=2) + "\n", encoding="utf-8")
        return path
    if fmt == "csv":
        lines = [_CSV_HEADER, ",".join(_metric_row(r))]
        lines.append(f"# config_fingerprint: {r.config_fingerprint}")
        lines.append(f"# images: {r.n_images}")
        lines.append(f"# jobs_scored: {r.n_jobs_scored}")
        lines.append(f"# unmatched: {r.n_unmatched}")
        lines.append(f"# orphans: {r.n_orphans}")
        lines.append(f"# cnt_f1_aggregate: {_fmt(r.cnt_f1_aggregate, 3)}")
        lines.append(f"# drift: {_drift_line(r.drift)}")
        for note in r.notes:
            lines.append(f"# note: {note}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    if fmt == "markdown":
        cols = _CSV_HEADER.split(",")
        lines = [
            "| " + " | ".join(cols) + " |",
            "| " + " | ".join("---" for _ in cols) + " |",
            "| " + " | ".join(v or "n/a" for v in _metric_row(r)) + " |",
            "",
            f"- config_fingerprint: {r.config_fingerprint}",
            f"- images: {r.n_images}",
            f"- jobs scored: {r.n_jobs_scored}",
            f"- unmatched: {r.n_unmatched}",
            f"- orphans: {r.n_orphans}",
            f"- cnt_f1_aggregate: {_fmt(r.cnt_f1_aggregate, 3) or 'n/a'}",
            f"- drift: {_drift_line(r.drift)}",
        ]
        for note in r.notes:
            lines.append(f"- note: {note}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    raise InputError(f"unknown report format {fmt!r}")


# ----------------------------------------------------------------- heatmaps


def render_heatmap(d, out_path: Union[str, Path]) -> Path:
    """Write a deterministic PNG heatmap of a density map.

    Values are min-max normalized and mapped through a fixed black-red-
    yellow-white ramp; small maps are integer-upscaled so they stay
    visible. A footer strip prints the integrated count.
    """
    from PIL import Image, ImageDraw

    arr = np.asarray(d.values, dtype=np.float64)
    lo = float(arr.min())
    hi = float(arr.max())
    t = np.zeros_like(arr) if hi <= lo else (arr - lo) / (hi - lo)
    red = np.clip(3.0 * t, 0.0, 1.0)
    green = np.clip(3.0 * t - 1.0, 0.0, 1.0)
    blue = np.clip(3.0 * t - 2.0, 0.0, 1.0)
    rgb = np.stack([red, green, blue], axis=-1)
    pixels = (rgb * 255.0 + 0.5).astype(np.uint8)
    img = Image.fromarray(pixels, "RGB")
    scale = max(1, 128 // max(d.height, d.width))
    if scale > 1:
        img = img.resize((d.width * scale, d.height * scale), Image.Resampling.NEAREST)
    canvas = Image.new("RGB", (img.width, img.height + 14), (0, 0, 0))
    canvas.paste(img, (0, 0))
    draw = ImageDraw.Draw(canvas)
    draw.text((2, img.height + 2), f"count={sum_count(d):.2f}", fill=(255, 255, 255))
    out_path = Path(out_path)
    canvas.save(out_path, format="PNG")
    return out_path


def render_drift_boxplot(s: DriftSummary, out_path: Union[str, Path]) -> Path:
    """Draw the drift five-number summary as a horizontal boxplot PNG."""
    from PIL import Image, ImageDraw

    width, height = 440, 160
    left, right = 30, width - 30
    mid_y, half = 80, 22
    lo = min([s.whisker_low] + [v for _, _, v in s.outliers])
    hi = max([s.whisker_high] + [v for _, _, v in s.outliers])
    span = hi - lo if hi > lo else 1.0

    def x(value: float) -> int:
        return int(left + (value - lo) / span * (right - left) + 0.5)

    img = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    draw.line([(left, height - 20), (right, height - 20)], fill=(0, 0, 0))
    draw.text((left, height - 16), f"{lo:.3g}", fill=(0, 0, 0))
    draw.text((right - 30, height - 16), f"{hi:.3g}", fill=(0, 0, 0))
    draw.line([(x(s.whisker_low), mid_y), (x(s.q1), mid_y)], fill=(0, 0, 0))
    draw.line([(x(s.q3), mid_y), (x(s.whisker_high), mid_y)], fill=(0, 0, 0))
    for w in (s.whisker_low, s.whisker_high):
        draw.line([(x(w), mid_y - half // 2), (x(w), mid_y + half // 2)], fill=(0, 0, 0))
    draw.rectangle(
        [x(s.q1), mid_y - half, max(x(s.q3), x(s.q1) + 1), mid_y + half],
        fill=(220, 230, 250),
        outline=(0, 0, 0),
    )
    draw.line([(x(s.median), mid_y - half), (x(s.median), mid_y + half)], fill=(200, 0, 0))
    for _, _, v in s.outliers:
        draw.ellipse([x(v) - 2, mid_y - 2, x(v) + 2, mid_y + 2], outline=(0, 0, 0))
    draw.text((left, 10), f"drift: mean={s.mean:.4g} n={s.n_values}", fill=(0, 0, 0))
    out_path = Path(out_path)
    img.save(out_path, format="PNG")
    return out_path


# ------------------------------------------------------------ fingerprints


def fingerprint_config(paths: Sequence[Union[str, Path]], options: Mapping[str, object]) -> str:
    """Digest of input files plus normalized options; 16 hex chars."""
    h = hashlib.sha256()
    for p in paths:
        file_digest = hashlib.sha256(Path(p).read_bytes()).hexdigest()
        h.update(f"file:{Path(p).name}:{file_digest}\n".encode("utf-8"))
    for key in sorted(options):
        h.update(f"opt:{key}={options[key]!r}\n".encode("utf-8"))
    return h.hexdigest()[:16]


# -------------------------------------------------------- FSC-147 converter


def convert_fsc147(
    annotations: Mapping[str, dict],
    image_classes: Mapping[str, str],
    image_dir: str = "images",
    split_name: str = "",
    splits: Optional[Mapping[str, Sequence[str]]] = None,
) -> Manifest:
    """Best-effort converter from the published FSC-147 annotation layout.

    annotations maps image filename to a dict with a "points" list of [x, y]
    dot coordinates (other keys are ignored); image_classes maps image
    filename to its class name; splits optionally maps split name to the
    filenames it contains. gt_count is the number of dots.
    """
    names = sorted(annotations)
    if splits is not None and split_name:
        if split_name not in splits:
            raise InputError(f"split {split_name!r} not present in the split map")
        wanted = set(splits[split_name])
        names = [n for n in names if n in wanted]
    entries = []
    for name in names:
        raw = annotations[name]
        if not isinstance(raw, dict) or "points" not in raw:
            raise InputError(f"annotation for {name} lacks a points list")
        points = tuple((float(x), float(y)) for x, y in raw["points"])
        if name not in image_classes:
            raise InputError(f"image {name} has no class label")
        stem = name.rsplit(".", 1)[0]
        entries.append(
            ManifestEntry(
                image_id=stem,
                image_path=f"{image_dir}/{name}",
                class_name=str(image_classes[name]),
                gt_count=len(points),
                points=points,
            )
        )
    return Manifest(
        entries=tuple(entries),
        split_name=split_name,
        source_note=f"{FSC147_CONVERTER_VERSION} split={split_name or 'all'}",
    )
