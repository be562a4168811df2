"""Command-line front end for running a model entrypoint over a plan."""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .runner import AdapterConfigError, AdapterError, run_adapter


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="praco-adapter",
        description="Run a prompt-based counting model over a harness plan and "
        "write prediction JSONL (plus DMAP files for density outputs).",
    )
    parser.add_argument("--plan", required=True, type=Path)
    parser.add_argument("--model", required=True,
                        help="model entrypoint as module:function; the callable "
                        "takes (image path, prompt text)")
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--manifest", type=Path, default=None,
                        help="needed for negative-test plans to resolve image paths")
    parser.add_argument("--density-dir", type=Path, default=None,
                        help="where DMAP files go when the model returns maps")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel model calls; per-worker shards are merged at the end")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        summary = run_adapter(
            args.plan,
            args.model,
            args.out,
            density_dir=args.density_dir,
            manifest_path=args.manifest,
            workers=args.workers,
        )
    except AdapterConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AdapterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    line = (
        f"jobs={summary.total_jobs} skipped={summary.skipped} "
        f"succeeded={summary.succeeded} failed={summary.failed} out={summary.out_path}"
    )
    if summary.density_dir is not None:
        line += f" density_dir={summary.density_dir}"
    if summary.failures_path is not None:
        line += f" failures={summary.failures_path}"
    print(line)
    if not summary.ok:
        print(
            f"error: {summary.failed} of {summary.attempted} jobs failed, "
            "over the 10% limit",
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
