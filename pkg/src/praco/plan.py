"""Job enumeration for the negative-label and mosaic tests.

Plans are pure functions of (manifest, config): job lists are fully sorted
and any subsampling is driven by a counter-style SHA-256 construction, so
output is byte-identical across runs, platforms, and thread counts, and
adding images to the manifest never reshuffles the samples drawn for
existing images.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .core import ConfigError, InputError, Manifest, MosaicJob, NegativeJob

MODE_FULL = "full"
MODE_SAMPLED = "sampled"


@dataclass(frozen=True)
class PlanConfig:
    """Plan-generation settings.

    Attributes:
        mode: "full" enumerates every job; "sampled" draws
            negatives_per_image jobs per image with a seeded generator.
        negatives_per_image: sample size per image, used iff sampled.
        seed: 64-bit unsigned sampling seed.
        dedupe_prompts_by_class: prompt pool is the set of distinct class
            names. The flag exists for interface stability; turning it off
            changes nothing because jobs are keyed by (image, prompt) and
            duplicate prompts collapse to a single job.
    """

    mode: str = MODE_FULL
    negatives_per_image: int = 0
    seed: int = 0
    dedupe_prompts_by_class: bool = True

    def __post_init__(self):
        if self.mode not in (MODE_FULL, MODE_SAMPLED):
            raise ConfigError(f"mode must be 'full' or 'sampled', got {self.mode!r}")
        if self.mode == MODE_SAMPLED and self.negatives_per_image < 1:
            raise ConfigError("sampled mode requires negatives_per_image >= 1")
        if not (0 <= self.seed < 2**64):
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")


def filter_manifest(m: Manifest, max_classes: int = 1) -> Manifest:
    """Keep only entries whose class_count_in_image is at most max_classes."""
    if max_classes < 1:
        raise ConfigError(f"max_classes must be >= 1, got {max_classes}")
    kept = tuple(e for e in m.entries if e.class_count_in_image <= max_classes)
    return Manifest(entries=kept, split_name=m.split_name, source_note=m.source_note)


def _rank(seed: int, *parts: str) -> int:
    """Deterministic sampling rank: low ranks win selection."""
    h = hashlib.sha256(str(seed).encode("ascii"))
    for part in parts:
        h.update(b"|")
        h.update(part.encode("utf-8"))
    return int.from_bytes(h.digest()[:16], "big")


def _sample(candidates: list[str], k: int, rank_key) -> list[str]:
    return sorted(candidates, key=rank_key)[:k]


def build_negative_plan(m: Manifest, cfg: PlanConfig) -> list[NegativeJob]:
    """Enumerate negative-test jobs: each image prompted with class names.

    Every image gets its positive prompt (its own class). Full mode adds
    every other distinct class; sampled mode adds negatives_per_image of
    them, chosen by seeded rank. Prompts naming the image's own class are
    positive even when they originate from other images, because datasets
    repeat classes across images.
    """
    classes = m.class_names()
    jobs: list[NegativeJob] = []
    for entry in m.entries:
        negatives = [c for c in classes if c != entry.class_name]
        if cfg.mode == MODE_SAMPLED:
            if cfg.negatives_per_image > len(negatives):
                raise ConfigError(
                    f"negatives_per_image={cfg.negatives_per_image} exceeds the "
                    f"{len(negatives)} eligible negative prompts for image {entry.image_id}"
                )
            negatives = _sample(
                negatives,
                cfg.negatives_per_image,
                lambda c, image_id=entry.image_id: _rank(cfg.seed, "negative", image_id, c),
            )
        jobs.append(NegativeJob(entry.image_id, entry.class_name, True))
        for c in negatives:
            jobs.append(NegativeJob(entry.image_id, c, False))
    jobs.sort(key=lambda j: (j.image_id, j.prompt_class))
    return jobs


def build_mosaic_plan(m: Manifest, cfg: PlanConfig) -> list[MosaicJob]:
    """Enumerate mosaic-test jobs: ordered image pairs with differing classes.

    The top (positive) image supplies the prompt; the bottom image must be a
    true negative, so pairs sharing a class are excluded. Sampled mode draws
    negatives_per_image partners per positive image by seeded rank.
    """
    jobs: list[MosaicJob] = []
    for entry in m.entries:
        partners = [
            other.image_id
            for other in m.entries
            if other.image_id != entry.image_id and other.class_name != entry.class_name
        ]
        if cfg.mode == MODE_SAMPLED:
            if cfg.negatives_per_image > len(partners):
                raise ConfigError(
                    f"negatives_per_image={cfg.negatives_per_image} exceeds the "
                    f"{len(partners)} eligible partners for image {entry.image_id}"
                )
            partners = _sample(
                partners,
                cfg.negatives_per_image,
                lambda n, image_id=entry.image_id: _rank(cfg.seed, "mosaic", image_id, n),
            )
        for neg_id in partners:
            jobs.append(MosaicJob(entry.image_id, neg_id, entry.class_name))
    jobs.sort(key=lambda j: (j.pos_image_id, j.neg_image_id))
    return jobs


def check_plan_against_manifest(jobs, m: Manifest) -> None:
    """Reject jobs referencing images absent from the manifest."""
    known = m.by_id
    for job in jobs:
        if isinstance(job, NegativeJob):
            if job.image_id not in known:
                raise InputError(f"job {job.key} references unknown image {job.image_id}")
        else:
            for image_id in (job.pos_image_id, job.neg_image_id):
                if image_id not in known:
                    raise InputError(f"job {job.key} references unknown image {image_id}")
