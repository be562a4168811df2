"""End-to-end command-line workflows driven in-process."""

import json
from pathlib import Path

import pytest

from praco import (
    PlanConfig,
    build_mosaic_plan,
    build_negative_plan,
    load_density_file,
    load_plan,
    load_report_json,
    sum_count,
)
from conftest import FIVE_CLASSES, make_manifest, write_dataset, write_manifest_json


THREE_CLASSES = [("apples", 2), ("bees", 3), ("cars", 4)]


def plan_both(cli, manifest_path, tmp_path):
    neg = tmp_path / "neg_plan.jsonl"
    mos = tmp_path / "mos_plan.jsonl"
    code, _, err = cli("plan", "--manifest", manifest_path, "--test", "negative", "--out", neg)
    assert code == 0, err
    code, _, err = cli("plan", "--manifest", manifest_path, "--test", "mosaic", "--out", mos)
    assert code == 0, err
    return neg, mos


def simulate(cli, manifest_path, plan, out, model="perfect"):
    code, stdout, err = cli(
        "simulate", "--manifest", manifest_path, "--plan", plan, "--model", model, "--out", out
    )
    assert code == 0, err
    return stdout


def parse_kv(line):
    return dict(part.split("=", 1) for part in line.strip().split(" "))


class TestPlanCommand:
    def test_negative_plan_summary_and_content(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        out = tmp_path / "plan.jsonl"
        code, stdout, _ = cli(
            "plan", "--manifest", manifest_path, "--test", "negative", "--out", out
        )
        assert code == 0
        assert stdout == f"test=negative jobs=25 positives=5 out={out}\n"
        assert load_plan(out) == build_negative_plan(make_manifest(FIVE_CLASSES), PlanConfig(mode="full"))

    def test_mosaic_plan_summary(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        out = tmp_path / "plan.jsonl"
        code, stdout, _ = cli("plan", "--manifest", manifest_path, "--test", "mosaic", "--out", out)
        assert code == 0
        assert stdout == f"test=mosaic jobs=20 out={out}\n"
        assert load_plan(out) == build_mosaic_plan(make_manifest(FIVE_CLASSES), PlanConfig(mode="full"))

    def test_sampled_mode(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        out = tmp_path / "plan.jsonl"
        code, stdout, _ = cli(
            "plan",
            "--manifest", manifest_path,
            "--test", "negative",
            "--mode", "sampled",
            "--negatives-per-image", "2",
            "--seed", "1",
            "--out", out,
        )
        assert code == 0
        assert "jobs=15 positives=5" in stdout

    def test_sampled_without_size_is_config_error(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        code, _, err = cli(
            "plan",
            "--manifest", manifest_path,
            "--test", "negative",
            "--mode", "sampled",
            "--out", tmp_path / "plan.jsonl",
        )
        assert code == 2
        assert err.startswith("error:")

    def test_two_runs_byte_identical(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            assert cli("plan", "--manifest", manifest_path, "--test", "mosaic", "--out", out)[0] == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_manifest_is_runtime_error(self, cli, tmp_path):
        code, _, err = cli(
            "plan",
            "--manifest", tmp_path / "absent.json",
            "--test", "negative",
            "--out", tmp_path / "plan.jsonl",
        )
        assert code == 1
        assert "error:" in err

    def test_missing_required_flag_is_usage_error(self, cli, tmp_path):
        code, _, _ = cli("plan", "--test", "negative")
        assert code == 2

    def test_unknown_subcommand_is_usage_error(self, cli):
        assert cli("transmogrify")[0] == 2


class TestComposeCommand:
    def test_compose_writes_mosaics_and_plan(self, cli, tmp_path):
        manifest_path = write_dataset(tmp_path, THREE_CLASSES)
        plan = tmp_path / "mos_plan.jsonl"
        assert cli("plan", "--manifest", manifest_path, "--test", "mosaic", "--out", plan)[0] == 0
        out_dir = tmp_path / "mosaics"
        code, stdout, err = cli(
            "compose", "--manifest", manifest_path, "--plan", plan, "--out-dir", out_dir
        )
        assert code == 0, err
        assert f"mosaics=6 failures=0 plan={out_dir / 'mosaic_plan.jsonl'}" in stdout
        composed = load_plan(out_dir / "mosaic_plan.jsonl")
        assert len(composed) == 6
        heights = {"img0": 16, "img1": 22, "img2": 28}
        for job in composed:
            assert job.mosaic_path == f"mosaic_{job.pos_image_id}__{job.neg_image_id}.png"
            assert job.boundary_row == heights[job.pos_image_id]
            assert (out_dir / job.mosaic_path).is_file()

    def test_partial_failure_keeps_successes(self, cli, tmp_path):
        manifest_path = write_dataset(tmp_path, THREE_CLASSES)
        plan = tmp_path / "mos_plan.jsonl"
        assert cli("plan", "--manifest", manifest_path, "--test", "mosaic", "--out", plan)[0] == 0
        (tmp_path / "images" / "img0.png").unlink()
        out_dir = tmp_path / "mosaics"
        code, stdout, err = cli(
            "compose", "--manifest", manifest_path, "--plan", plan, "--out-dir", out_dir
        )
        assert code == 1
        assert "mosaics=2 failures=4" in stdout
        assert "compose failed" in err
        composed = load_plan(out_dir / "mosaic_plan.jsonl")
        assert {(j.pos_image_id, j.neg_image_id) for j in composed} == {
            ("img1", "img2"),
            ("img2", "img1"),
        }

    def test_rejects_negative_plan(self, cli, tmp_path):
        manifest_path = write_dataset(tmp_path, THREE_CLASSES)
        plan = tmp_path / "neg_plan.jsonl"
        assert cli("plan", "--manifest", manifest_path, "--test", "negative", "--out", plan)[0] == 0
        code, _, err = cli(
            "compose", "--manifest", manifest_path, "--plan", plan, "--out-dir", tmp_path / "m"
        )
        assert code == 1
        assert "mosaic plan" in err


class TestSimulateCommand:
    def test_counts_output(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        out = tmp_path / "pred.jsonl"
        stdout = simulate(cli, manifest_path, neg, out)
        assert stdout == f"records=25 out={out}\n"
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 25
        for obj in lines:
            assert obj["count"] == (
                dict((f"img{i}", gt) for i, (_, gt) in enumerate(FIVE_CLASSES))[obj["image_id"]]
                if obj["is_positive"]
                else 0.0
            )

    def test_density_output(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        out = tmp_path / "pred.jsonl"
        stdout = simulate(cli, manifest_path, neg, out, model="perfect@density:16x16")
        assert f"density_dir={tmp_path / 'pred_density'}" in stdout
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert all("density_ref" in r and "count" not in r for r in records)
        first = records[0]
        d = load_density_file(out.parent / first["density_ref"])
        expect = (
            dict((f"img{i}", gt) for i, (_, gt) in enumerate(FIVE_CLASSES))[first["image_id"]]
            if first["is_positive"]
            else 0.0
        )
        assert sum_count(d) == pytest.approx(expect, abs=1e-6)

    def test_deterministic_bytes(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        blobs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            simulate(cli, manifest_path, neg, out, model="noisy_perfect:2,9")
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1]

    def test_threads_env_does_not_change_output(self, cli, tmp_path, monkeypatch):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, mos = plan_both(cli, manifest_path, tmp_path)
        out1 = tmp_path / "t1.jsonl"
        code, _, _ = cli(
            "simulate", "--manifest", manifest_path, "--plan", mos,
            "--model", "noisy_perfect:1,2", "--out", out1, "--threads", "1",
        )
        assert code == 0
        monkeypatch.setenv("PRACO_THREADS", "4")
        out4 = tmp_path / "t4.jsonl"
        code, _, _ = cli(
            "simulate", "--manifest", manifest_path, "--plan", mos,
            "--model", "noisy_perfect:1,2", "--out", out4,
        )
        assert code == 0
        assert out1.read_bytes() == out4.read_bytes()

    def test_bad_threads_env_is_config_error(self, cli, tmp_path, monkeypatch):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        monkeypatch.setenv("PRACO_THREADS", "lots")
        code, _, err = cli(
            "simulate", "--manifest", manifest_path, "--plan", neg,
            "--model", "perfect", "--out", tmp_path / "p.jsonl",
        )
        assert code == 2
        assert "PRACO_THREADS" in err

    def test_zero_threads_flag_is_config_error(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        code, _, _ = cli(
            "simulate", "--manifest", manifest_path, "--plan", neg,
            "--model", "perfect", "--out", tmp_path / "p.jsonl", "--threads", "0",
        )
        assert code == 2

    def test_bad_model_spec_is_config_error(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        code, _, _ = cli(
            "simulate", "--manifest", manifest_path, "--plan", neg,
            "--model", "telepathy", "--out", tmp_path / "p.jsonl",
        )
        assert code == 2


def score(cli, manifest_path, plans, predictions, out, fmt="json"):
    argv = ["score", "--manifest", manifest_path]
    for p in plans:
        argv += ["--plan", p]
    for p in predictions:
        argv += ["--predictions", p]
    argv += ["--out-report", out, "--format", fmt]
    return cli(*argv)


@pytest.fixture()
def perfect_run(cli, tmp_path):
    manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
    neg, mos = plan_both(cli, manifest_path, tmp_path)
    neg_pred = tmp_path / "neg_pred.jsonl"
    mos_pred = tmp_path / "mos_pred.jsonl"
    simulate(cli, manifest_path, neg, neg_pred)
    simulate(cli, manifest_path, mos, mos_pred)
    return manifest_path, neg, mos, neg_pred, mos_pred


class TestScoreCommand:
    def test_perfect_pipeline_json(self, cli, tmp_path, perfect_run):
        manifest_path, neg, mos, neg_pred, mos_pred = perfect_run
        out = tmp_path / "report.json"
        code, stdout, err = score(cli, manifest_path, [neg, mos], [neg_pred, mos_pred], out)
        assert code == 0, err
        kv = parse_kv(stdout)
        assert kv["nmn"] == "0" and kv["pccn"] == "100"
        assert kv["cnt_p"] == "1" and kv["cnt_r"] == "1" and kv["cnt_f1"] == "1"
        assert kv["mae"] == "0" and kv["rmse"] == "0"
        assert kv["images"] == "5" and kv["jobs_scored"] == "45"
        assert kv["unmatched"] == "0" and kv["orphans"] == "0"
        report = load_report_json(out)
        assert report.nmn == 0.0 and report.pccn == 100.0
        assert report.cnt_p == 1.0 and report.cnt_r == 1.0 and report.cnt_f1 == 1.0
        assert report.drift is not None and report.drift.mean == 0.0
        assert len(report.config_fingerprint) == 16

    def test_perfect_pipeline_csv_row(self, cli, tmp_path, perfect_run):
        manifest_path, neg, mos, neg_pred, mos_pred = perfect_run
        out = tmp_path / "report.csv"
        code, _, _ = score(cli, manifest_path, [neg, mos], [neg_pred, mos_pred], out, fmt="csv")
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "NMN,PCCN,CntP,CntR,CntF1,MAE,RMSE"
        assert lines[1] == "0.00,100.00,1.000,1.000,1.000,0.00,0.00"

    def test_missing_prediction_counts_unmatched(self, cli, tmp_path, perfect_run):
        manifest_path, neg, mos, neg_pred, mos_pred = perfect_run
        lines = mos_pred.read_text().splitlines()
        mos_pred.write_text("\n".join(lines[:-1]) + "\n")
        out = tmp_path / "report.json"
        code, stdout, _ = score(cli, manifest_path, [neg, mos], [neg_pred, mos_pred], out)
        assert code == 0
        assert parse_kv(stdout)["unmatched"] == "1"
        assert load_report_json(out).n_unmatched == 1

    def test_orphan_prediction_counted(self, cli, tmp_path, perfect_run):
        manifest_path, neg, mos, neg_pred, mos_pred = perfect_run
        with neg_pred.open("a") as fh:
            fh.write(
                json.dumps(
                    {
                        "test": "negative",
                        "image_id": "img0",
                        "prompt_class": "zebras",
                        "is_positive": False,
                        "count": 3.0,
                    }
                )
                + "\n"
            )
        out = tmp_path / "report.json"
        code, stdout, _ = score(cli, manifest_path, [neg, mos], [neg_pred, mos_pred], out)
        assert code == 0
        assert parse_kv(stdout)["orphans"] == "1"

    def test_duplicate_record_is_fatal(self, cli, tmp_path, perfect_run):
        manifest_path, neg, mos, neg_pred, mos_pred = perfect_run
        lines = neg_pred.read_text().splitlines()
        neg_pred.write_text("\n".join(lines + [lines[0]]) + "\n")
        code, _, err = score(
            cli, manifest_path, [neg, mos], [neg_pred, mos_pred], tmp_path / "r.json"
        )
        assert code == 1
        assert "duplicate prediction record" in err

    def test_density_metrics_match_count_metrics(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, mos = plan_both(cli, manifest_path, tmp_path)
        reports = {}
        for tag, model in (
            ("counts", "class_confuser:0.35"),
            ("density", "class_confuser:0.35@density:32x16"),
        ):
            neg_pred = tmp_path / f"neg_{tag}.jsonl"
            mos_pred = tmp_path / f"mos_{tag}.jsonl"
            simulate(cli, manifest_path, neg, neg_pred, model=model)
            simulate(cli, manifest_path, mos, mos_pred, model=model)
            out = tmp_path / f"report_{tag}.json"
            code, _, err = score(cli, manifest_path, [neg, mos], [neg_pred, mos_pred], out)
            assert code == 0, err
            reports[tag] = load_report_json(out)
        a, b = reports["counts"], reports["density"]
        for field in ("nmn", "pccn", "cnt_p", "cnt_r", "cnt_f1", "mae", "rmse"):
            assert getattr(b, field) == pytest.approx(getattr(a, field), abs=1e-4), field

    def test_composed_mosaics_score_through_density(self, cli, tmp_path):
        manifest_path = write_dataset(tmp_path, THREE_CLASSES)
        plan = tmp_path / "mos_plan.jsonl"
        assert cli("plan", "--manifest", manifest_path, "--test", "mosaic", "--out", plan)[0] == 0
        out_dir = tmp_path / "mosaics"
        assert cli(
            "compose", "--manifest", manifest_path, "--plan", plan, "--out-dir", out_dir
        )[0] == 0
        composed_plan = out_dir / "mosaic_plan.jsonl"
        pred = tmp_path / "mos_pred.jsonl"
        simulate(cli, manifest_path, composed_plan, pred, model="perfect@density:40x12")
        out = tmp_path / "report.json"
        code, stdout, err = score(cli, manifest_path, [composed_plan], [pred], out)
        assert code == 0, err
        report = load_report_json(out)
        assert report.cnt_p == pytest.approx(1.0, abs=1e-6)
        assert report.cnt_r == pytest.approx(1.0, abs=1e-6)


class TestVizCommand:
    def test_renders_heatmap(self, cli, tmp_path):
        manifest_path = write_manifest_json(tmp_path, FIVE_CLASSES)
        neg, _ = plan_both(cli, manifest_path, tmp_path)
        pred = tmp_path / "pred.jsonl"
        simulate(cli, manifest_path, neg, pred, model="perfect@density:16x16")
        record = json.loads(pred.read_text().splitlines()[0])
        density_file = tmp_path / record["density_ref"]
        out = tmp_path / "heat.png"
        code, stdout, err = cli("viz", "--density", density_file, "--out", out)
        assert code == 0, err
        assert out.is_file()
        kv = parse_kv(stdout)
        assert kv["height"] == "16" and kv["width"] == "16"

    def test_missing_density_file(self, cli, tmp_path):
        code, _, _ = cli("viz", "--density", tmp_path / "gone.dmap", "--out", tmp_path / "h.png")
        assert code == 1


class TestDriftCommand:
    def test_drift_from_echoed_records(self, cli, tmp_path, perfect_run):
        _, _, _, neg_pred, mos_pred = perfect_run
        out = tmp_path / "drift.csv"
        code, stdout, err = cli(
            "drift", "--neg-report-raw", neg_pred, "--mosaic-report-raw", mos_pred, "--out", out
        )
        assert code == 0, err
        kv = parse_kv(stdout)
        assert kv["n"] == "20" and kv["mean"] == "0"
        lines = out.read_text().splitlines()
        assert lines[0] == "kind,key,value"
        assert "summary,mean,0.0" in lines
        assert "summary,n_values,20" in lines

    def test_drift_plot(self, cli, tmp_path, perfect_run):
        _, _, _, neg_pred, mos_pred = perfect_run
        plot = tmp_path / "drift.png"
        code, stdout, _ = cli(
            "drift",
            "--neg-report-raw", neg_pred,
            "--mosaic-report-raw", mos_pred,
            "--out", tmp_path / "drift.csv",
            "--plot", plot,
        )
        assert code == 0
        assert plot.is_file()
        assert f"plot={plot}" in stdout

    def test_unflagged_records_need_manifest(self, cli, tmp_path, perfect_run):
        manifest_path, _, _, neg_pred, mos_pred = perfect_run
        stripped = tmp_path / "neg_stripped.jsonl"
        lines = []
        for line in neg_pred.read_text().splitlines():
            obj = json.loads(line)
            obj.pop("is_positive")
            lines.append(json.dumps(obj))
        stripped.write_text("\n".join(lines) + "\n")
        code, _, err = cli(
            "drift",
            "--neg-report-raw", stripped,
            "--mosaic-report-raw", mos_pred,
            "--out", tmp_path / "d.csv",
        )
        assert code == 2
        assert "--manifest" in err
        code, stdout, err = cli(
            "drift",
            "--neg-report-raw", stripped,
            "--mosaic-report-raw", mos_pred,
            "--manifest", manifest_path,
            "--out", tmp_path / "d.csv",
        )
        assert code == 0, err
        assert parse_kv(stdout)["n"] == "20"

    def test_mixed_up_files_rejected(self, cli, tmp_path, perfect_run):
        _, _, _, neg_pred, mos_pred = perfect_run
        code, _, err = cli(
            "drift", "--neg-report-raw", mos_pred, "--mosaic-report-raw", neg_pred,
            "--out", tmp_path / "d.csv",
        )
        assert code == 1
        assert "expected negative-test records" in err
