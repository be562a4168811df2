"""Run a user-supplied counting model over a harness plan.

The adapter is a dumb executor: it hands each job's image path and prompt
to the model callable, records the returned scalar count or 2-D density
grid in the prediction wire format, and leaves all scoring math to the
harness. The output file is rewritten atomically in plan order on every
run and jobs already present are skipped, so a resumed run converges to
the same bytes as an uninterrupted one.
"""

import hashlib
import importlib
import json
import math
import numbers
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

from .dmap import DmapFormatError, encode_dmap, grid_to_flat

ModelFn = Callable[[str, str], Any]

# a run with more than this fraction of failed jobs is reported as not ok
FAILURE_RATE_LIMIT = 0.10


class AdapterError(Exception):
    """Base class for everything the adapter raises on purpose."""


class AdapterConfigError(AdapterError):
    """Bad plan, entrypoint, or flags: nothing was (or should be) run."""


class AdapterRunError(AdapterError):
    """The run itself could not proceed or produced inconsistent state."""


@dataclass(frozen=True)
class PlanJob:
    """One inference job parsed from a plan JSONL line."""

    test: str
    image_id: str = ""
    prompt_class: str = ""
    is_positive: bool = False
    pos_image_id: str = ""
    neg_image_id: str = ""
    mosaic_path: Optional[str] = None
    boundary_row: Optional[int] = None

    @property
    def key(self) -> tuple[str, str, str]:
        if self.test == "negative":
            return ("negative", self.image_id, self.prompt_class)
        return ("mosaic", self.pos_image_id, self.neg_image_id)


@dataclass(frozen=True)
class AdapterSummary:
    """What one run did; ok is False when too many jobs failed."""

    total_jobs: int
    skipped: int
    attempted: int
    succeeded: int
    failed: int
    ok: bool
    out_path: Path
    density_dir: Optional[Path]
    failures_path: Optional[Path]


_NEG_KEYS = {"test", "image_id", "prompt_class", "is_positive"}
_MOS_REQUIRED = {"test", "pos_image_id", "neg_image_id", "prompt_class"}
_MOS_KEYS = _MOS_REQUIRED | {"mosaic_path", "boundary_row"}


def load_plan_jobs(path: Union[str, Path]) -> list[PlanJob]:
    """Parse a plan JSONL file; any malformed line is fatal."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise AdapterConfigError(f"cannot read plan {path}: {exc}")
    jobs: list[PlanJob] = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path} line {n}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterConfigError(f"{where}: invalid JSON: {exc}")
        if not isinstance(obj, dict):
            raise AdapterConfigError(f"{where}: job must be a JSON object")
        test = obj.get("test")
        if test == "negative":
            _check_keys(obj, _NEG_KEYS, _NEG_KEYS, where)
            if not isinstance(obj["is_positive"], bool):
                raise AdapterConfigError(f"{where}: is_positive must be a boolean")
            jobs.append(
                PlanJob(
                    test="negative",
                    image_id=_text(obj, "image_id", where),
                    prompt_class=_text(obj, "prompt_class", where),
                    is_positive=obj["is_positive"],
                )
            )
        elif test == "mosaic":
            _check_keys(obj, _MOS_REQUIRED, _MOS_KEYS, where)
            mosaic_path = obj.get("mosaic_path")
            if mosaic_path is not None and not isinstance(mosaic_path, str):
                raise AdapterConfigError(f"{where}: mosaic_path must be a string")
            boundary = obj.get("boundary_row")
            if boundary is not None and (isinstance(boundary, bool) or not isinstance(boundary, int)):
                raise AdapterConfigError(f"{where}: boundary_row must be an integer")
            jobs.append(
                PlanJob(
                    test="mosaic",
                    pos_image_id=_text(obj, "pos_image_id", where),
                    neg_image_id=_text(obj, "neg_image_id", where),
                    prompt_class=_text(obj, "prompt_class", where),
                    mosaic_path=mosaic_path,
                    boundary_row=boundary,
                )
            )
        else:
            raise AdapterConfigError(f"{where}: test must be 'negative' or 'mosaic', got {test!r}")
    return jobs


def _check_keys(obj: dict, required: set, allowed: set, where: str) -> None:
    missing = required - set(obj)
    if missing:
        raise AdapterConfigError(f"{where}: missing field(s): {sorted(missing)}")
    unknown = set(obj) - allowed
    if unknown:
        raise AdapterConfigError(f"{where}: unknown field(s): {sorted(unknown)}")


def _text(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise AdapterConfigError(f"{where}: {key} must be a string")
    return value


def resolve_entrypoint(spec: str) -> ModelFn:
    """Import "module:function" and return the callable it names."""
    module_name, sep, attr = spec.partition(":")
    if not sep or not module_name or not attr:
        raise AdapterConfigError(f"model entrypoint must look like module:function, got {spec!r}")
    try:
        module = importlib.import_module(module_name)
    except ImportError as exc:
        raise AdapterConfigError(f"cannot import model module {module_name!r}: {exc}")
    target: Any = module
    for part in attr.split("."):
        try:
            target = getattr(target, part)
        except AttributeError:
            raise AdapterConfigError(f"module {module_name!r} has no attribute {attr!r}")
    if not callable(target):
        raise AdapterConfigError(f"model entrypoint {spec!r} is not callable")
    return target


def load_image_paths(manifest_path: Union[str, Path]) -> dict[str, Path]:
    """Map image_id to an image path, resolved against the manifest's parent.

    Only the fields the adapter needs are checked; full manifest validation
    stays with the harness.
    """
    manifest_path = Path(manifest_path)
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise AdapterConfigError(f"cannot read manifest {manifest_path}: {exc}")
    except json.JSONDecodeError as exc:
        raise AdapterConfigError(f"{manifest_path}: invalid JSON: {exc}")
    if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
        raise AdapterConfigError(f"{manifest_path}: expected an object with an 'entries' list")
    root = manifest_path.parent
    paths: dict[str, Path] = {}
    for i, entry in enumerate(data["entries"]):
        if not isinstance(entry, dict):
            raise AdapterConfigError(f"{manifest_path}: entry {i}: must be a JSON object")
        image_id = entry.get("image_id")
        image_path = entry.get("image_path")
        if not isinstance(image_id, str) or not isinstance(image_path, str):
            raise AdapterConfigError(
                f"{manifest_path}: entry {i}: image_id and image_path must be strings"
            )
        if image_id in paths:
            raise AdapterConfigError(f"{manifest_path}: duplicate image_id: {image_id}")
        p = Path(image_path)
        paths[image_id] = p if p.is_absolute() else root / p
    return paths


def _record_line(job: PlanJob, count: Optional[float] = None, density_ref: Optional[str] = None) -> str:
    if job.test == "negative":
        out: dict[str, Any] = {
            "test": "negative",
            "image_id": job.image_id,
            "prompt_class": job.prompt_class,
            "is_positive": job.is_positive,
            "count": count,
            "density_ref": density_ref,
        }
    else:
        out = {
            "test": "mosaic",
            "pos_image_id": job.pos_image_id,
            "neg_image_id": job.neg_image_id,
            "prompt_class": job.prompt_class,
            "mosaic_path": job.mosaic_path,
            "boundary_row": job.boundary_row,
            "count": count,
            "density_ref": density_ref,
        }
    return json.dumps({k: v for k, v in out.items() if v is not None})


def _record_key(obj: dict, where: str) -> tuple[str, str, str]:
    test = obj.get("test")
    if test == "negative":
        fields = ("image_id", "prompt_class")
    elif test == "mosaic":
        fields = ("pos_image_id", "neg_image_id")
    else:
        raise AdapterRunError(f"{where}: test must be 'negative' or 'mosaic', got {test!r}")
    values = []
    for field in fields:
        value = obj.get(field)
        if not isinstance(value, str):
            raise AdapterRunError(f"{where}: {field} must be a string")
        values.append(value)
    return (test, values[0], values[1])


def _read_existing(out: Path, plan_keys: set) -> dict[tuple, str]:
    """Completed records from a previous run, keyed by job, line kept verbatim.

    A torn final line (interrupted write) is dropped; anything else that
    fails to parse, or that names a job outside this plan, is fatal.
    """
    if not out.is_file():
        return {}
    lines = out.read_text(encoding="utf-8").splitlines()
    done: dict[tuple, str] = {}
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{out} line {n}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            if all(not rest.strip() for rest in lines[n:]):
                break
            raise AdapterRunError(f"{where}: invalid JSON: {exc}")
        if not isinstance(obj, dict):
            raise AdapterRunError(f"{where}: record must be a JSON object")
        key = _record_key(obj, where)
        if key not in plan_keys:
            raise AdapterRunError(f"{where}: record {key} does not belong to this plan")
        if key in done:
            raise AdapterRunError(f"{where}: duplicate record for job {key}")
        done[key] = line
    return done


def _sanitize(text: str) -> str:
    clean = "".join(c if (c.isalnum() or c in "._-") else "_" for c in text)
    return clean[:40] or "x"


def _map_name(job: PlanJob) -> str:
    if job.test == "negative":
        kind, a, b = "neg", job.image_id, job.prompt_class
    else:
        kind, a, b = "mos", job.pos_image_id, job.neg_image_id
    digest = hashlib.sha256(f"{kind}|{a}|{b}".encode("utf-8")).hexdigest()[:8]
    return f"{kind}_{_sanitize(a)}_{_sanitize(b)}_{digest}.dmap"


def _failure_entry(job: PlanJob, exc: Exception) -> dict:
    entry: dict[str, Any] = {"test": job.test}
    if job.test == "negative":
        entry["image_id"] = job.image_id
    else:
        entry["pos_image_id"] = job.pos_image_id
        entry["neg_image_id"] = job.neg_image_id
    entry["prompt_class"] = job.prompt_class
    entry["error"] = f"{type(exc).__name__}: {exc}"
    return entry


def run_adapter(
    plan_path: Union[str, Path],
    model: Union[str, ModelFn],
    out_predictions: Union[str, Path],
    density_dir: Optional[Union[str, Path]] = None,
    manifest_path: Optional[Union[str, Path]] = None,
    workers: int = 1,
) -> AdapterSummary:
    """Answer every pending plan job with the model and write predictions.

    A scalar return becomes a count record (negative jobs only; a mosaic
    needs a density map so the harness can split it at the seam). A 2-D
    grid return is written as a DMAP file under density_dir (default
    <out stem>_density next to the output) and referenced from the record.
    A model exception marks that job failed in a .failures.jsonl sidecar
    and the run continues; more than 10% failures flips ok to False.
    """
    plan_path = Path(plan_path)
    out = Path(out_predictions)
    if workers < 1:
        raise AdapterConfigError(f"workers must be at least 1, got {workers}")
    model_fn = model if callable(model) else resolve_entrypoint(str(model))

    jobs = load_plan_jobs(plan_path)
    seen_keys: set = set()
    for job in jobs:
        if job.key in seen_keys:
            raise AdapterConfigError(f"plan contains duplicate job {job.key}")
        seen_keys.add(job.key)

    image_paths: dict[str, Path] = {}
    if manifest_path is not None:
        image_paths = load_image_paths(manifest_path)
    plan_base = plan_path.parent
    for job in jobs:
        if job.test == "negative":
            if manifest_path is None:
                raise AdapterConfigError(
                    "plan contains negative-test jobs; a manifest is needed to resolve image paths"
                )
            if job.image_id not in image_paths:
                raise AdapterConfigError(f"image {job.image_id} is not in the manifest")
        elif not job.mosaic_path:
            raise AdapterConfigError(
                f"mosaic job {job.key} has no composed image; run the compose step first"
            )

    done = _read_existing(out, seen_keys)
    pending = [job for job in jobs if job.key not in done]
    density_root = Path(density_dir) if density_dir is not None else out.parent / (out.stem + "_density")
    out.parent.mkdir(parents=True, exist_ok=True)

    def _job_image(job: PlanJob) -> Path:
        if job.test == "negative":
            return image_paths[job.image_id]
        p = Path(job.mosaic_path)
        return p if p.is_absolute() else plan_base / p

    def _normalize(job: PlanJob, result: Any) -> tuple[str, Any]:
        if isinstance(result, numbers.Real) and not isinstance(result, bool):
            value = float(result)
            if not math.isfinite(value):
                raise ValueError(f"model returned a non-finite count: {result!r}")
            if job.test == "mosaic":
                raise ValueError(
                    "model returned a scalar for a mosaic; a density map is needed "
                    "to split the count at the seam"
                )
            return "count", value
        height, width, flat = grid_to_flat(result)
        return "density", encode_dmap(height, width, flat)

    def _execute(job: PlanJob) -> tuple[Optional[str], Optional[dict]]:
        try:
            result = model_fn(str(_job_image(job)), job.prompt_class)
            kind, payload = _normalize(job, result)
        except Exception as exc:  # a model fault fails one job, not the run
            return None, _failure_entry(job, exc)
        if kind == "count":
            return _record_line(job, count=payload), None
        name = _map_name(job)
        try:
            density_root.mkdir(parents=True, exist_ok=True)
            (density_root / name).write_bytes(payload)
        except OSError as exc:
            raise AdapterRunError(f"cannot write density map {density_root / name}: {exc}")
        ref = Path(os.path.relpath(density_root / name, out.parent)).as_posix()
        return _record_line(job, density_ref=ref), None

    def _run_shard(shard_jobs: Sequence[PlanJob], shard_path: Path):
        lines: dict[tuple, str] = {}
        failures: dict[tuple, dict] = {}
        # the shard file is a per-worker checkpoint, truncated at start
        with shard_path.open("w", encoding="utf-8") as fh:
            for job in shard_jobs:
                line, failure = _execute(job)
                if failure is not None:
                    failures[job.key] = failure
                    continue
                lines[job.key] = line
                fh.write(line + "\n")
                fh.flush()
        return lines, failures

    shard_paths = [out.parent / f"{out.name}.shard{w}" for w in range(workers)]
    if workers > 1 and len(pending) > 1:
        shards = [pending[w::workers] for w in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_shard, shards, shard_paths))
    else:
        results = [_run_shard(pending, shard_paths[0])]

    computed: dict[tuple, str] = {}
    failures: dict[tuple, dict] = {}
    for lines, fails in results:
        computed.update(lines)
        failures.update(fails)

    merged = {**done, **computed}
    tmp = out.parent / (out.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for job in jobs:
            if job.key in merged:
                fh.write(merged[job.key] + "\n")
    os.replace(tmp, out)
    for shard in shard_paths:
        if shard.is_file():
            shard.unlink()

    failures_path = out.parent / (out.stem + ".failures.jsonl")
    ordered_failures = [failures[job.key] for job in jobs if job.key in failures]
    if ordered_failures:
        with failures_path.open("w", encoding="utf-8") as fh:
            for entry in ordered_failures:
                fh.write(json.dumps(entry) + "\n")
    elif failures_path.is_file():
        failures_path.unlink()

    attempted = len(pending)
    failed = len(ordered_failures)
    rate = failed / attempted if attempted else 0.0
    return AdapterSummary(
        total_jobs=len(jobs),
        skipped=len(done),
        attempted=attempted,
        succeeded=attempted - failed,
        failed=failed,
        ok=rate <= FAILURE_RATE_LIMIT,
        out_path=out,
        density_dir=density_root if density_root.is_dir() else None,
        failures_path=failures_path if ordered_failures else None,
    )
