"""Shared fixtures: small manifests, generated images, and a CLI runner."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from praco import Manifest, ManifestEntry
from praco.cli import main as cli_main

FIVE_CLASSES = [("apples", 4), ("bees", 7), ("cars", 11), ("dogs", 3), ("eggs", 9)]
FOUR_CLASSES = [("ants", 2), ("bolts", 5), ("cups", 8), ("drums", 13)]


def make_manifest(pairs, prefix="img", split="dev") -> Manifest:
    entries = tuple(
        ManifestEntry(
            image_id=f"{prefix}{i}",
            image_path=f"images/{prefix}{i}.png",
            class_name=class_name,
            gt_count=gt,
        )
        for i, (class_name, gt) in enumerate(pairs)
    )
    return Manifest(entries=entries, split_name=split)


@pytest.fixture
def manifest5() -> Manifest:
    return make_manifest(FIVE_CLASSES)


@pytest.fixture
def manifest4() -> Manifest:
    return make_manifest(FOUR_CLASSES)


def write_image(path: Path, size: tuple[int, int], seed: int) -> None:
    """Deterministic RGB gradient PNG so resizes have non-trivial content."""
    from PIL import Image

    w, h = size
    img = Image.new("RGB", (w, h))
    px = img.load()
    for y in range(h):
        for x in range(w):
            px[x, y] = (
                (x * 7 + seed * 31) % 256,
                (y * 11 + seed * 17) % 256,
                (x * 3 + y * 5 + seed) % 256,
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def write_dataset(tmp_path: Path, pairs, sizes=None, prefix="img") -> Path:
    """Write manifest.json plus a matching images/ directory; returns the
    manifest path."""
    manifest = make_manifest(pairs, prefix=prefix)
    sizes = sizes or [(20 + 4 * i, 16 + 6 * i) for i in range(len(pairs))]
    for i, entry in enumerate(manifest.entries):
        write_image(tmp_path / entry.image_path, sizes[i], seed=i)
    manifest_path = tmp_path / "manifest.json"
    from praco.io import save_manifest

    save_manifest(manifest_path, manifest)
    return manifest_path


def write_manifest_json(tmp_path: Path, pairs, name="manifest.json") -> Path:
    """Write only the manifest file (no images) for count-level workflows."""
    from praco.io import save_manifest

    path = tmp_path / name
    save_manifest(path, make_manifest(pairs))
    return path


@pytest.fixture
def cli(capsys):
    """Invoke the CLI in-process; returns (exit_code, stdout, stderr)."""

    def _run(*argv: str):
        code = cli_main([str(a) for a in argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return _run


GOLDEN_DIR = Path(__file__).parent / "golden"


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
