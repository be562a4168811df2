"""Command-line workflow: plan, compose, simulate, score, viz, drift.

Every subcommand is deterministic given its flags (all randomness is
seeded), prints one machine-parsable key=value summary line on stdout, and
uses exit codes 0 (success), 1 (runtime or I/O failure), 2 (configuration).
Job-level parallelism in compose/simulate/score follows --threads, the
PRACO_THREADS environment variable, or the machine's CPU count, in that
order; results never depend on the thread count.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .core import ConfigError, HarnessError, InputError, MosaicJob, NegativeJob
from .density import load_density_file, sum_count
from .metrics import MosaicPairScore, MosaicScoredSet, build_report, drift_stats
from .mosaic import ComposePolicy, compose_mosaic, MOSAIC_FILENAME_PATTERN, WIDTH_PAD, WIDTH_RESIZE
from .plan import PlanConfig, build_mosaic_plan, build_negative_plan, filter_manifest
from .simulate import EMIT_DENSITY, parse_model_spec, run_synthetic
from . import io as pio


def _threads(args) -> int:
    value = getattr(args, "threads", None)
    if value is not None:
        if value < 1:
            raise ConfigError(f"--threads must be >= 1, got {value}")
        return value
    env = os.environ.get("PRACO_THREADS")
    if env:
        try:
            parsed = int(env)
        except ValueError:
            raise ConfigError(f"PRACO_THREADS must be an integer, got {env!r}")
        if parsed < 1:
            raise ConfigError(f"PRACO_THREADS must be >= 1, got {parsed}")
        return parsed
    return os.cpu_count() or 1


def _kv(value) -> str:
    if value is None:
        return "na"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def cmd_plan(args) -> int:
    manifest = filter_manifest(pio.load_manifest(args.manifest), args.max_classes)
    cfg = PlanConfig(mode=args.mode, negatives_per_image=args.negatives_per_image, seed=args.seed)
    if args.test == "negative":
        jobs = build_negative_plan(manifest, cfg)
        positives = sum(1 for j in jobs if j.is_positive)
        extra = f" positives={positives}"
    else:
        jobs = build_mosaic_plan(manifest, cfg)
        extra = ""
    args.out.parent.mkdir(parents=True, exist_ok=True)
    pio.save_plan(args.out, jobs)
    print(f"test={args.test} jobs={len(jobs)}{extra} out={args.out}")
    return 0


def cmd_compose(args) -> int:
    from PIL import Image

    manifest = pio.load_manifest(args.manifest)
    jobs = pio.load_plan(args.plan)
    if any(isinstance(j, NegativeJob) for j in jobs):
        raise InputError("compose expects a mosaic plan; this plan contains negative-test jobs")
    policy = ComposePolicy(width_policy=args.policy)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    image_root = Path(args.manifest).parent

    def _image_path(image_id: str) -> Path:
        entry = manifest.by_id.get(image_id)
        if entry is None:
            raise InputError(f"plan references image {image_id} absent from the manifest")
        p = Path(entry.image_path)
        return p if p.is_absolute() else image_root / p

    def _one(job: MosaicJob):
        try:
            with Image.open(_image_path(job.pos_image_id)) as pos_img:
                with Image.open(_image_path(job.neg_image_id)) as neg_img:
                    mosaic, boundary = compose_mosaic(pos_img, neg_img, policy)
        except (OSError, HarnessError) as exc:
            return None, f"compose failed for {job.key}: {exc}"
        name = MOSAIC_FILENAME_PATTERN.format(pos=job.pos_image_id, neg=job.neg_image_id)
        mosaic.save(out_dir / name, format="PNG")
        updated = MosaicJob(
            job.pos_image_id,
            job.neg_image_id,
            job.prompt_class,
            mosaic_path=name,
            boundary_row=boundary,
        )
        return updated, None

    threads = _threads(args)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]

    composed = [job for job, err in results if job is not None]
    failures = [err for _, err in results if err is not None]
    plan_out = out_dir / "mosaic_plan.jsonl"
    pio.save_plan(plan_out, composed)
    print(f"mosaics={len(composed)} failures={len(failures)} plan={plan_out}")
    for err in failures:
        print(err, file=sys.stderr)
    return 1 if failures else 0


def cmd_simulate(args) -> int:
    manifest = pio.load_manifest(args.manifest)
    jobs = pio.load_plan(args.plan)
    spec = parse_model_spec(args.model)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    density_dir = None
    if spec.emit == EMIT_DENSITY:
        density_dir = out.parent / (out.stem + "_density")
    records = run_synthetic(
        spec,
        jobs,
        manifest,
        density_dir=density_dir,
        threads=_threads(args),
        path_base=Path(args.plan).parent,
    )
    pio.save_predictions(out, records)
    suffix = f" density_dir={density_dir}" if density_dir is not None else ""
    print(f"records={len(records)} out={out}{suffix}")
    return 0


def cmd_score(args) -> int:
    manifest = pio.load_manifest(args.manifest)
    jobs = []
    plan_base: Optional[Path] = None
    for plan_path in args.plan:
        loaded_jobs = pio.load_plan(plan_path)
        if plan_base is None and any(isinstance(j, MosaicJob) for j in loaded_jobs):
            plan_base = Path(plan_path).parent
        jobs.extend(loaded_jobs)
    records_with_base = []
    for pred_path in args.predictions:
        pred_path = Path(pred_path)
        for record in pio.load_prediction_records(pred_path):
            records_with_base.append((record, pred_path.parent))
    loaded = pio.join_predictions(
        records_with_base, jobs, manifest, plan_base=plan_base, threads=_threads(args)
    )
    fingerprint = pio.fingerprint_config(
        [args.manifest, *args.plan, *args.predictions], {"format": args.format}
    )
    report = build_report(
        loaded.negative,
        loaded.mosaic,
        n_unmatched=len(loaded.unmatched),
        n_orphans=len(loaded.orphans),
        config_fingerprint=fingerprint,
        notes=loaded.notes,
    )
    out = Path(args.out_report)
    out.parent.mkdir(parents=True, exist_ok=True)
    pio.write_report(report, out, fmt=args.format)
    print(
        f"nmn={_kv(report.nmn)} pccn={_kv(report.pccn)} cnt_p={_kv(report.cnt_p)} "
        f"cnt_r={_kv(report.cnt_r)} cnt_f1={_kv(report.cnt_f1)} mae={_kv(report.mae)} "
        f"rmse={_kv(report.rmse)} images={report.n_images} jobs_scored={report.n_jobs_scored} "
        f"unmatched={report.n_unmatched} orphans={report.n_orphans} report={out}"
    )
    return 0


def cmd_viz(args) -> int:
    d = load_density_file(args.density)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pio.render_heatmap(d, out)
    print(f"out={out} height={d.height} width={d.width} count={_kv(sum_count(d))}")
    return 0


def cmd_drift(args) -> int:
    manifest = pio.load_manifest(args.manifest) if args.manifest else None
    neg_path = Path(args.neg_report_raw)
    mos_path = Path(args.mosaic_report_raw)

    diagonal: dict[str, float] = {}
    for record in pio.load_prediction_records(neg_path):
        if record.test != "negative":
            raise InputError(f"{neg_path}: expected negative-test records, found {record.key}")
        positive = record.is_positive
        if positive is None:
            if manifest is None:
                raise ConfigError(
                    f"record {record.key} does not mark is_positive; pass --manifest so the "
                    "positive prompts can be identified"
                )
            entry = manifest.by_id.get(record.image_id)
            if entry is None:
                raise InputError(f"record {record.key} references an image absent from the manifest")
            positive = entry.class_name == record.prompt_class
        if positive:
            diagonal[record.image_id] = pio.resolve_negative_count(record, neg_path.parent)

    pairs = []
    for record in pio.load_prediction_records(mos_path):
        if record.test != "mosaic":
            raise InputError(f"{mos_path}: expected mosaic-test records, found {record.key}")
        c_pos, c_neg = pio.resolve_mosaic_counts(record, None, mos_path.parent)
        gt = 1
        if manifest is not None:
            entry = manifest.by_id.get(record.pos_image_id)
            if entry is not None:
                gt = entry.gt_count
        # gt feeds only the scored-set shape; the drift ratio never uses it
        pairs.append(
            MosaicPairScore(
                pos_image_id=record.pos_image_id,
                neg_image_id=record.neg_image_id,
                c_pos=c_pos,
                c_neg=c_neg,
                gt_count=gt,
            )
        )
    if not pairs:
        raise InputError(f"{mos_path}: no mosaic records to analyze")
    summary = drift_stats(diagonal, MosaicScoredSet(tuple(pairs)))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["kind,key,value"]
    for name in ("mean", "median", "q1", "q3", "whisker_low", "whisker_high"):
        lines.append(f"summary,{name},{getattr(summary, name)!r}")
    lines.append(f"summary,n_values,{summary.n_values}")
    lines.append(f"summary,n_skipped,{len(summary.skipped)}")
    for pos, neg, value in summary.outliers:
        lines.append(f"outlier,{pos}__{neg},{value!r}")
    for pos, neg in summary.skipped:
        lines.append(f"skipped,{pos}__{neg},")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    plot_note = ""
    if args.plot:
        plot = Path(args.plot)
        plot.parent.mkdir(parents=True, exist_ok=True)
        pio.render_drift_boxplot(summary, plot)
        plot_note = f" plot={plot}"
    print(
        f"n={summary.n_values} mean={_kv(summary.mean)} median={_kv(summary.median)} "
        f"outliers={len(summary.outliers)} skipped={len(summary.skipped)} out={out}{plot_note}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="praco",
        description="Benchmark harness for prompt-based counting models: "
        "negative-label and mosaic test plans, synthetic models, and metric reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="enumerate inference jobs for one test")
    sp.add_argument("--manifest", required=True, type=Path)
    sp.add_argument("--test", required=True, choices=["negative", "mosaic"])
    sp.add_argument("--mode", default="full", choices=["full", "sampled"])
    sp.add_argument("--negatives-per-image", type=int, default=0,
                    help="sample size per image (sampled mode only)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-classes", type=int, default=1,
                    help="keep only images with at most this many visible classes")
    sp.add_argument("--out", required=True, type=Path)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("compose", help="render mosaic images for a mosaic plan")
    sp.add_argument("--manifest", required=True, type=Path)
    sp.add_argument("--plan", required=True, type=Path)
    sp.add_argument("--policy", default=WIDTH_RESIZE, choices=[WIDTH_RESIZE, WIDTH_PAD])
    sp.add_argument("--out-dir", required=True, type=Path)
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_compose)

    sp = sub.add_parser("simulate", help="answer a plan with a synthetic model")
    sp.add_argument("--manifest", required=True, type=Path)
    sp.add_argument("--plan", required=True, type=Path)
    sp.add_argument("--model", required=True,
                    help="e.g. perfect, prompt_blind, constant:5, noisy_perfect:0.5,42, "
                    "class_confuser:0.3, any followed by @density:HxW")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("score", help="join predictions to plans and compute metrics")
    sp.add_argument("--manifest", required=True, type=Path)
    sp.add_argument("--plan", required=True, action="append", type=Path,
                    help="repeatable; give the negative and mosaic plans together")
    sp.add_argument("--predictions", required=True, action="append", type=Path,
                    help="repeatable; prediction JSONL files")
    sp.add_argument("--out-report", required=True, type=Path)
    sp.add_argument("--format", default="json", choices=["json", "csv", "markdown"])
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("viz", help="render a density map as a heatmap PNG")
    sp.add_argument("--density", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.set_defaults(func=cmd_viz)

    sp = sub.add_parser("drift", help="summarize positive-count drift across mosaics")
    sp.add_argument("--neg-report-raw", required=True, type=Path,
                    help="negative-test prediction JSONL (supplies the per-image reference)")
    sp.add_argument("--mosaic-report-raw", required=True, type=Path,
                    help="mosaic-test prediction JSONL")
    sp.add_argument("--manifest", type=Path, default=None,
                    help="needed only when records do not echo is_positive")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--plot", type=Path, default=None, help="optional boxplot PNG")
    sp.set_defaults(func=cmd_drift)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
