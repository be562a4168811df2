"""Adapter command line: flags, exit codes, and the summary line."""

from praco_adapter.cli import main as adapter_main
from adapter_helpers import adapter_cli, negative_row, parse_kv, write_manifest, write_plan

TRIPLES = [("a", "apples", 2), ("b", "bees", 3), ("c", "cars", 4)]


def make_setup(tmp_path):
    rows = [
        negative_row(image_id, prompt, prompt == own)
        for image_id, own, _ in TRIPLES
        for _, prompt, _ in TRIPLES
    ]
    plan = write_plan(tmp_path / "plan.jsonl", rows)
    manifest = write_manifest(tmp_path / "manifest.json", TRIPLES)
    return plan, manifest


def test_count_run_summary_line(adapter_cli, tmp_path):
    plan, manifest = make_setup(tmp_path)
    out = tmp_path / "preds.jsonl"
    code, stdout, stderr = adapter_cli(
        "--plan", plan, "--model", "stub_models:constant_five",
        "--out", out, "--manifest", manifest,
    )
    assert code == 0
    assert stderr == ""
    kv = parse_kv(stdout)
    assert kv["jobs"] == "9"
    assert kv["skipped"] == "0"
    assert kv["succeeded"] == "9"
    assert kv["failed"] == "0"
    assert kv["out"] == str(out)
    assert "density_dir" not in kv
    assert len(out.read_text().splitlines()) == 9


def test_density_run_reports_map_dir(adapter_cli, tmp_path):
    plan, manifest = make_setup(tmp_path)
    out = tmp_path / "preds.jsonl"
    code, stdout, _ = adapter_cli(
        "--plan", plan, "--model", "stub_models:zeros_grid",
        "--out", out, "--manifest", manifest,
    )
    assert code == 0
    assert parse_kv(stdout)["density_dir"] == str(tmp_path / "preds_density")


def test_workers_flag_keeps_output_stable(adapter_cli, tmp_path):
    plan, manifest = make_setup(tmp_path)
    out_a = tmp_path / "a.jsonl"
    out_b = tmp_path / "b.jsonl"
    assert adapter_cli("--plan", plan, "--model", "stub_models:constant_five",
                       "--out", out_a, "--manifest", manifest)[0] == 0
    assert adapter_cli("--plan", plan, "--model", "stub_models:constant_five",
                       "--out", out_b, "--manifest", manifest, "--workers", "4")[0] == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_failure_threshold_exit_code(adapter_cli, tmp_path):
    plan, manifest = make_setup(tmp_path)
    out = tmp_path / "preds.jsonl"
    code, stdout, stderr = adapter_cli(
        "--plan", plan, "--model", "stub_models:fail_on_bees",
        "--out", out, "--manifest", manifest,
    )
    assert code == 1
    kv = parse_kv(stdout)
    assert kv["failed"] == "3"
    assert kv["failures"] == str(tmp_path / "preds.failures.jsonl")
    assert "over the 10% limit" in stderr


def test_bad_entrypoint_is_config_error(adapter_cli, tmp_path):
    plan, manifest = make_setup(tmp_path)
    code, _, stderr = adapter_cli(
        "--plan", plan, "--model", "stub_models", "--out", tmp_path / "p.jsonl",
        "--manifest", manifest,
    )
    assert code == 2
    assert "error:" in stderr


def test_missing_manifest_for_negative_plan(adapter_cli, tmp_path):
    plan, _ = make_setup(tmp_path)
    code, _, stderr = adapter_cli(
        "--plan", plan, "--model", "stub_models:constant_five", "--out", tmp_path / "p.jsonl",
    )
    assert code == 2
    assert "manifest" in stderr


def test_missing_required_flag_is_usage_error(capsys):
    code = adapter_main(["--plan", "x.jsonl"])
    capsys.readouterr()
    assert code == 2
