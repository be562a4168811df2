"""Synthetic counting models with analytically known metric outcomes.

These models exercise the whole pipeline without any real inference: each
job's answer is a closed-form function of the manifest, so every metric the
scorer produces can be checked against hand arithmetic. Output is the
standard prediction record stream (optionally with density-map files) and
is indistinguishable from a real adapter's output.

Model spec grammar (for the CLI and parse_model_spec):

    perfect
    prompt_blind
    constant:K
    noisy_perfect:SIGMA[,SEED]
    class_confuser:LEAK

optionally followed by "@density:HxW" (or "@density" for 64x64) to emit
density maps instead of scalar counts.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist
from typing import Optional, Sequence, Union

import numpy as np

from .core import DensityMap, ConfigError, InputError, Manifest, MosaicJob, NegativeJob, PredictionRecord
from .density import save_density_file
from .mosaic import map_boundary_to_density_row

KIND_PERFECT = "perfect"
KIND_PROMPT_BLIND = "prompt_blind"
KIND_CONSTANT = "constant"
KIND_NOISY_PERFECT = "noisy_perfect"
KIND_CLASS_CONFUSER = "class_confuser"

EMIT_COUNTS = "counts"
EMIT_DENSITY = "density_maps"

_KINDS = (KIND_PERFECT, KIND_PROMPT_BLIND, KIND_CONSTANT, KIND_NOISY_PERFECT, KIND_CLASS_CONFUSER)


@dataclass(frozen=True)
class SyntheticModelSpec:
    """A fully determined synthetic model.

    kind selects the behavior; k, sigma/noise_seed, and leak parameterize
    constant, noisy_perfect, and class_confuser respectively. emit chooses
    between scalar counts and rendered density maps of map_height x
    map_width.
    """

    kind: str
    k: float = 0.0
    sigma: float = 0.0
    noise_seed: int = 0
    leak: float = 0.0
    emit: str = EMIT_COUNTS
    map_height: int = 64
    map_width: int = 64

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown synthetic model kind {self.kind!r}")
        if self.k < 0 or not math.isfinite(self.k):
            raise ConfigError(f"constant k must be a finite non-negative real, got {self.k}")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ConfigError(f"sigma must be a finite non-negative real, got {self.sigma}")
        if not (0 <= self.leak <= 1):
            raise ConfigError(f"leak must lie in [0, 1], got {self.leak}")
        if self.emit not in (EMIT_COUNTS, EMIT_DENSITY):
            raise ConfigError(f"emit must be 'counts' or 'density_maps', got {self.emit!r}")
        if self.map_height < 1 or self.map_width < 1:
            raise ConfigError(
                f"density map dimensions must be positive, got {self.map_height}x{self.map_width}"
            )


def parse_model_spec(text: str) -> SyntheticModelSpec:
    """Parse the model spec grammar documented at module top."""
    base, _, emit_part = text.partition("@")
    kind, _, argtext = base.partition(":")
    kind = kind.strip()
    args = [a.strip() for a in argtext.split(",")] if argtext.strip() else []

    def _float(value: str, what: str) -> float:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{what} in model spec {text!r} is not a number: {value!r}")

    fields: dict = {"kind": kind}
    if kind in (KIND_PERFECT, KIND_PROMPT_BLIND):
        if args:
            raise ConfigError(f"model kind {kind!r} takes no arguments, got {argtext!r}")
    elif kind == KIND_CONSTANT:
        if len(args) != 1:
            raise ConfigError(f"constant takes exactly one argument, got {argtext!r}")
        fields["k"] = _float(args[0], "constant k")
    elif kind == KIND_NOISY_PERFECT:
        if len(args) not in (1, 2):
            raise ConfigError(f"noisy_perfect takes sigma[,seed], got {argtext!r}")
        fields["sigma"] = _float(args[0], "sigma")
        if len(args) == 2:
            try:
                fields["noise_seed"] = int(args[1])
            except ValueError:
                raise ConfigError(f"noise seed is not an integer: {args[1]!r}")
    elif kind == KIND_CLASS_CONFUSER:
        if len(args) != 1:
            raise ConfigError(f"class_confuser takes exactly one argument, got {argtext!r}")
        fields["leak"] = _float(args[0], "leak")
    else:
        raise ConfigError(f"unknown synthetic model kind {kind!r}")

    emit_part = emit_part.strip()
    if emit_part:
        emit_kind, _, dims = emit_part.partition(":")
        if emit_kind.strip() != "density":
            raise ConfigError(f"unknown emit mode {emit_part!r}; expected density[:HxW]")
        fields["emit"] = EMIT_DENSITY
        if dims.strip():
            parts = dims.lower().split("x")
            if len(parts) != 2:
                raise ConfigError(f"density dimensions must look like HxW, got {dims!r}")
            try:
                fields["map_height"] = int(parts[0])
                fields["map_width"] = int(parts[1])
            except ValueError:
                raise ConfigError(f"density dimensions must be integers, got {dims!r}")
    return SyntheticModelSpec(**fields)


def _rank(seed: int, *parts) -> int:
    h = hashlib.sha256(str(seed).encode("ascii"))
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "big")


def _gauss(sigma: float, seed: int, *key) -> float:
    """Deterministic zero-mean Gaussian draw keyed by (seed, key)."""
    if sigma == 0:
        return 0.0
    u64 = _rank(seed, *key) & ((1 << 64) - 1)
    u = (u64 + 0.5) / 2.0**64
    return NormalDist(0.0, sigma).inv_cdf(u)


def _clamp0(value: float) -> float:
    return value if value > 0 else 0.0


def _sanitize(text: str) -> str:
    clean = "".join(c if (c.isalnum() or c in "._-") else "_" for c in text)
    return clean[:40] or "x"


def _gt(manifest: Manifest, image_id: str, job_key) -> int:
    entry = manifest.by_id.get(image_id)
    if entry is None:
        raise InputError(f"job {job_key} references image {image_id} absent from the manifest")
    return entry.gt_count


def _negative_count(spec: SyntheticModelSpec, job: NegativeJob, gt: int) -> float:
    if spec.kind == KIND_PERFECT:
        return float(gt) if job.is_positive else 0.0
    if spec.kind == KIND_PROMPT_BLIND:
        return float(gt)
    if spec.kind == KIND_CONSTANT:
        return spec.k
    if spec.kind == KIND_NOISY_PERFECT:
        base = float(gt) if job.is_positive else 0.0
        return _clamp0(base + _gauss(spec.sigma, spec.noise_seed, "negative", job.image_id, job.prompt_class))
    if spec.kind == KIND_CLASS_CONFUSER:
        return float(gt) if job.is_positive else spec.leak * gt
    raise ConfigError(f"unknown synthetic model kind {spec.kind!r}")


def _mosaic_counts(
    spec: SyntheticModelSpec, job: MosaicJob, gt_pos: int, gt_neg: int
) -> tuple[float, float]:
    if spec.kind == KIND_PERFECT:
        return float(gt_pos), 0.0
    if spec.kind == KIND_PROMPT_BLIND:
        return float(gt_pos), float(gt_neg)
    if spec.kind == KIND_CONSTANT:
        return spec.k, spec.k
    if spec.kind == KIND_NOISY_PERFECT:
        c_pos = _clamp0(gt_pos + _gauss(spec.sigma, spec.noise_seed, "mosaic_pos", job.pos_image_id, job.neg_image_id))
        c_neg = _clamp0(_gauss(spec.sigma, spec.noise_seed, "mosaic_neg", job.pos_image_id, job.neg_image_id))
        return c_pos, c_neg
    if spec.kind == KIND_CLASS_CONFUSER:
        return float(gt_pos), spec.leak * gt_neg
    raise ConfigError(f"unknown synthetic model kind {spec.kind!r}")


def _scatter(acc, count: float, row_lo: int, row_hi: int, width: int, *key) -> None:
    """Drop `count` mass into rows [row_lo, row_hi) at seeded cells.

    Whole units land as 1.0 dots; the fractional remainder lands as one
    lighter dot, so the region's mass equals count up to float32 storage.
    """
    whole = int(math.floor(count))
    frac = count - whole
    span = row_hi - row_lo
    for i in range(whole):
        row = row_lo + _rank(0, "row", i, *key) % span
        col = _rank(0, "col", i, *key) % width
        acc[row, col] += 1.0
    if frac > 0:
        row = row_lo + _rank(0, "row", whole, *key) % span
        col = _rank(0, "col", whole, *key) % width
        acc[row, col] += frac


def _mosaic_geometry(
    spec: SyntheticModelSpec, job: MosaicJob, path_base: Optional[Path]
) -> tuple[int, Optional[int], Optional[str]]:
    """Resolve the seam row in map space plus the boundary/path to echo."""
    if job.boundary_row is not None:
        if not job.mosaic_path:
            # boundary without an image: the map is the mosaic's resolution
            seam = map_boundary_to_density_row(job.boundary_row, spec.map_height, spec.map_height)
            return seam, job.boundary_row, None
        target = Path(job.mosaic_path)
        if not target.is_absolute() and path_base is not None and (path_base / target).is_file():
            target = path_base / target
        size = _image_size(str(target))
        if size is None:
            raise InputError(f"job {job.key}: mosaic image {job.mosaic_path} is unreadable")
        seam = map_boundary_to_density_row(job.boundary_row, size[1], spec.map_height)
        return seam, job.boundary_row, job.mosaic_path
    if spec.map_height < 2:
        raise InputError(
            f"density map height {spec.map_height} cannot represent a mosaic seam"
        )
    seam = spec.map_height // 2
    return seam, seam, None


def _image_size(path: str) -> Optional[tuple[int, int]]:
    try:
        from PIL import Image

        with Image.open(path) as img:
            return img.size
    except Exception:
        return None


def run_synthetic(
    spec: SyntheticModelSpec,
    jobs: Sequence[Union[NegativeJob, MosaicJob]],
    manifest: Manifest,
    density_dir: Optional[Union[str, Path]] = None,
    threads: int = 1,
    path_base: Optional[Union[str, Path]] = None,
) -> list[PredictionRecord]:
    """Answer every job per the synthetic model; returns records in job order.

    In density_maps mode each record carries a density_ref relative to
    density_dir's parent (density_dir is required and is created). Relative
    mosaic_path values resolve against path_base, typically the directory
    of the plan that named them. Results are a pure function of
    (spec, jobs, manifest) regardless of threads.
    """
    if spec.emit == EMIT_DENSITY:
        if density_dir is None:
            raise InputError("density_maps emission requires a density_dir")
        density_dir = Path(density_dir)
        density_dir.mkdir(parents=True, exist_ok=True)
    path_base = Path(path_base) if path_base is not None else None

    def _answer(job) -> PredictionRecord:
        if isinstance(job, NegativeJob):
            gt = _gt(manifest, job.image_id, job.key)
            count = _negative_count(spec, job, gt)
            if spec.emit == EMIT_COUNTS:
                return PredictionRecord(
                    test="negative",
                    image_id=job.image_id,
                    prompt_class=job.prompt_class,
                    is_positive=job.is_positive,
                    count=count,
                )
            acc = np.zeros((spec.map_height, spec.map_width), dtype=np.float64)
            if count > 0:
                _scatter(acc, count, 0, spec.map_height, spec.map_width,
                         "negative", job.image_id, job.prompt_class)
            ref = _write_map(density_dir, acc, "neg", job.image_id, job.prompt_class)
            return PredictionRecord(
                test="negative",
                image_id=job.image_id,
                prompt_class=job.prompt_class,
                is_positive=job.is_positive,
                density_ref=ref,
            )
        gt_pos = _gt(manifest, job.pos_image_id, job.key)
        gt_neg = _gt(manifest, job.neg_image_id, job.key)
        c_pos, c_neg = _mosaic_counts(spec, job, gt_pos, gt_neg)
        if spec.emit == EMIT_COUNTS:
            return PredictionRecord(
                test="mosaic",
                pos_image_id=job.pos_image_id,
                neg_image_id=job.neg_image_id,
                prompt_class=job.prompt_class,
                mosaic_path=job.mosaic_path,
                boundary_row=job.boundary_row,
                c_pos=c_pos,
                c_neg=c_neg,
            )
        seam, echo_boundary, echo_path = _mosaic_geometry(spec, job, path_base)
        acc = np.zeros((spec.map_height, spec.map_width), dtype=np.float64)
        if c_pos > 0:
            _scatter(acc, c_pos, 0, seam, spec.map_width,
                     "mosaic_pos", job.pos_image_id, job.neg_image_id)
        if c_neg > 0:
            _scatter(acc, c_neg, seam, spec.map_height, spec.map_width,
                     "mosaic_neg", job.pos_image_id, job.neg_image_id)
        ref = _write_map(density_dir, acc, "mos", job.pos_image_id, job.neg_image_id)
        return PredictionRecord(
            test="mosaic",
            pos_image_id=job.pos_image_id,
            neg_image_id=job.neg_image_id,
            prompt_class=job.prompt_class,
            mosaic_path=echo_path,
            boundary_row=echo_boundary,
            density_ref=ref,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_answer, jobs))
    return [_answer(job) for job in jobs]


def _write_map(density_dir: Path, values, kind: str, a: str, b: str) -> str:
    digest = hashlib.sha256(f"{kind}|{a}|{b}".encode("utf-8")).hexdigest()[:8]
    name = f"{kind}_{_sanitize(a)}_{_sanitize(b)}_{digest}.dmap"
    save_density_file(density_dir / name, DensityMap(values))
    return f"{density_dir.name}/{name}"
