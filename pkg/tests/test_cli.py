"""Command-line pipeline: subcommands, exit codes, artifact formats."""

import hashlib
import json
import re
import shutil
import subprocess
import sys
import xml.dom.minidom
from pathlib import Path

import pytest

from evidseg.cli import config_hash, main, make_run_id, parse_perturb
from evidseg.errors import ConfigError
from evidseg.metrics import CSV_COLUMNS
from evidseg.phantom import PerturbSpec


def _tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small end-to-end run shared by the artifact tests."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    run = root / "run"
    assert main(["phantom", "--count", "12", "--size", "32",
                 "--slices-per-case", "3", "--seed", "5", "--out", str(data)]) == 0
    assert main(["train", "--dataset", str(data), "--epochs", "3",
                 "--batch-size", "4", "--seed", "5", "--out", str(run)]) == 0
    eval_mems = root / "eval-mems"
    eval_avg = root / "eval-avg"
    checkpoint = run / "checkpoint.evdf"
    assert main(["eval", "--checkpoint", str(checkpoint), "--dataset", str(data),
                 "--seed", "5", "--out", str(eval_mems)]) == 0
    assert main(["eval", "--checkpoint", str(checkpoint), "--dataset", str(data),
                 "--seed", "5", "--fusion", "average", "--perturb", "noise:0.05",
                 "--out", str(eval_avg)]) == 0
    plots = root / "plots"
    assert main(["report", str(eval_mems / "metrics.csv"), str(eval_avg / "metrics.csv"),
                 "--out", str(plots)]) == 0
    return {"root": root, "data": data, "run": run, "eval_mems": eval_mems,
            "eval_avg": eval_avg, "plots": plots}


class TestParsePerturb:
    def test_accepted_forms(self):
        assert parse_perturb(None, 0) is None
        assert parse_perturb("none", 0) is None
        spec = parse_perturb("noise:0.1", 7)
        assert spec == PerturbSpec(kind="noise", noise_var=0.1, seed=7)
        spec = parse_perturb("blur:10,9", 7)
        assert (spec.kind, spec.blur_var, spec.kernel_size) == ("blur", 10.0, 9)
        assert parse_perturb("missing:2", 1).n_missing == 2

    @pytest.mark.parametrize(
        "text", ["noise", "noise:", "noise:abc", "blur:10", "blur:a,b",
                 "missing:one", "gamma:3"]
    )
    def test_rejected_forms(self, text):
        with pytest.raises(ConfigError):
            parse_perturb(text, 0)


class TestRunIds:
    def test_config_hash_is_order_insensitive(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_run_id_format(self):
        run_id = make_run_id(42, {"x": 1})
        assert re.fullmatch(r"s42-[0-9a-f]{12}", run_id)


class TestPhantomCommand:
    def test_dataset_layout(self, pipeline):
        data = pipeline["data"]
        manifest = json.loads((data / "manifest.json").read_text())
        assert manifest["count"] == 12
        assert manifest["seed"] == 5
        assert re.fullmatch(r"s5-[0-9a-f]{12}", manifest["run_id"])
        assert manifest["config_hash"] in manifest["run_id"]
        assert len(manifest["samples"]) == 12

    def test_rerun_is_byte_identical(self, pipeline, tmp_path):
        again = tmp_path / "data2"
        assert main(["phantom", "--count", "12", "--size", "32",
                     "--slices-per-case", "3", "--seed", "5", "--out", str(again)]) == 0
        assert _tree_digest(again) == _tree_digest(pipeline["data"])

    def test_too_small_size_is_a_config_error(self, tmp_path):
        code = main(["phantom", "--count", "1", "--size", "8",
                     "--out", str(tmp_path / "d")])
        assert code == 2


class TestTrainCommand:
    def test_outputs_exist(self, pipeline):
        run = pipeline["run"]
        assert (run / "checkpoint.evdf").is_file()
        assert (run / "losses.csv").is_file()

    def test_loss_csv_schema(self, pipeline):
        lines = (pipeline["run"] / "losses.csv").read_text().splitlines()
        assert lines[0] == "epoch,total,phase_term,mixture_term,lr,run_id"
        assert len(lines) == 1 + 3  # header + one row per epoch
        for i, line in enumerate(lines[1:]):
            parts = line.split(",")
            assert int(parts[0]) == i
            for value in parts[1:5]:
                float(value)  # parses
            assert re.fullmatch(r"s5-[0-9a-f]{12}", parts[5])

    def test_checkpoint_embeds_run_metadata(self, pipeline):
        from evidseg.tensorio import load_checkpoint

        config, params = load_checkpoint(pipeline["run"] / "checkpoint.evdf")
        assert config["seed"] == 5
        assert config["train"]["epochs"] == 3
        assert "run_id" in config and "config_hash" in config
        assert any(name.startswith("extractor.") for name in params)

    def test_rerun_is_byte_identical(self, pipeline, tmp_path):
        again = tmp_path / "run2"
        assert main(["train", "--dataset", str(pipeline["data"]), "--epochs", "3",
                     "--batch-size", "4", "--seed", "5", "--out", str(again)]) == 0
        a = (again / "checkpoint.evdf").read_bytes()
        b = (pipeline["run"] / "checkpoint.evdf").read_bytes()
        assert a == b

    def test_config_file_and_flag_layering(self, pipeline, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"train": {"epochs": 1, "batch_size": 2}}))
        out = tmp_path / "run"
        assert main(["train", "--config", str(config), "--dataset",
                     str(pipeline["data"]), "--epochs", "2", "--seed", "0",
                     "--out", str(out)]) == 0
        lines = (out / "losses.csv").read_text().splitlines()
        assert len(lines) == 1 + 2  # the flag overrode the file's epochs


class TestEvalCommand:
    def test_metrics_csv_schema(self, pipeline):
        lines = (pipeline["eval_mems"] / "metrics.csv").read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2
        row = dict(zip(CSV_COLUMNS, lines[1].split(",")))
        assert row["fusion"] == "mems"
        assert row["perturb_kind"] == "none"
        assert 0.0 <= float(row["dgs"]) <= 1.0
        assert 0.0 < float(row["mean_u_fused"]) <= 1.0

    def test_metrics_json_metadata(self, pipeline):
        payload = json.loads((pipeline["eval_mems"] / "metrics.json").read_text())
        assert payload["seed"] == 5
        assert re.fullmatch(r"[0-9a-f]{12}", payload["config_hash"])
        assert payload["n_slices"] == 12
        assert payload["mean_present"] == 4.0

    def test_average_fusion_row(self, pipeline):
        lines = (pipeline["eval_avg"] / "metrics.csv").read_text().splitlines()
        row = dict(zip(CSV_COLUMNS, lines[1].split(",")))
        assert row["fusion"] == "average"
        assert row["perturb_kind"] == "noise"
        assert row["perturb_param"] == "0.05"

    def test_missing_phase_metadata(self, pipeline, tmp_path):
        out = tmp_path / "eval-missing"
        assert main(["eval", "--checkpoint", str(pipeline["run"] / "checkpoint.evdf"),
                     "--dataset", str(pipeline["data"]), "--seed", "3",
                     "--perturb", "missing:1", "--out", str(out)]) == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["mean_present"] == 3.0
        assert payload["perturb_kind"] == "missing"

    def test_rerun_is_byte_identical(self, pipeline, tmp_path):
        out = tmp_path / "eval2"
        assert main(["eval", "--checkpoint", str(pipeline["run"] / "checkpoint.evdf"),
                     "--dataset", str(pipeline["data"]), "--seed", "5",
                     "--out", str(out)]) == 0
        assert (out / "metrics.csv").read_bytes() == (
            pipeline["eval_mems"] / "metrics.csv"
        ).read_bytes()

    def test_bad_fusion_in_config_file(self, pipeline, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"eval": {"fusion": "vote"}}))
        code = main(["eval", "--config", str(config),
                     "--checkpoint", str(pipeline["run"] / "checkpoint.evdf"),
                     "--dataset", str(pipeline["data"]), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_malformed_perturb_flag(self, pipeline, tmp_path):
        code = main(["eval", "--checkpoint", str(pipeline["run"] / "checkpoint.evdf"),
                     "--dataset", str(pipeline["data"]), "--perturb", "noise:abc",
                     "--out", str(tmp_path / "o")])
        assert code == 2


class TestReportCommand:
    def test_default_outputs(self, pipeline):
        plots = pipeline["plots"]
        for metric in ("dgs", "dcs", "ece", "neg_log_ece", "ueo", "mean_u_fused"):
            assert (plots / f"{metric}.svg").is_file()
        assert (plots / "summary.txt").is_file()

    def test_svgs_are_well_formed_xml(self, pipeline):
        for path in pipeline["plots"].glob("*.svg"):
            doc = xml.dom.minidom.parse(str(path))
            assert doc.documentElement.tagName == "svg"

    def test_one_polyline_per_fusion_mode(self, pipeline):
        svg = (pipeline["plots"] / "dgs.svg").read_text()
        legend = svg[svg.index('id="legend_1"'):]
        assert len(re.findall(r'id="line2d_\d+"', legend)) == 2

    def test_summary_table_lists_both_runs(self, pipeline):
        text = (pipeline["plots"] / "summary.txt").read_text()
        assert text.startswith("# runs:")
        assert "mems" in text and "average" in text
        assert "perturb_kind" in text

    def test_rendering_is_deterministic(self, pipeline, tmp_path):
        out = tmp_path / "plots2"
        assert main(["report", str(pipeline["eval_mems"] / "metrics.csv"),
                     str(pipeline["eval_avg"] / "metrics.csv"),
                     "--metrics", "dgs", "--out", str(out)]) == 0
        assert (out / "dgs.svg").read_bytes() == (
            pipeline["plots"] / "dgs.svg"
        ).read_bytes()

    def test_metric_subset_flag(self, pipeline, tmp_path):
        out = tmp_path / "plots3"
        assert main(["report", str(pipeline["eval_mems"] / "metrics.csv"),
                     "--metrics", "dgs,ueo", "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"dgs.svg", "ueo.svg", "summary.txt"}

    def test_empty_csv_is_a_parse_error(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert main(["report", str(empty), "--out", str(tmp_path / "p")]) == 4

    def test_header_only_csv_is_a_parse_error(self, tmp_path):
        stub = tmp_path / "stub.csv"
        stub.write_text(",".join(CSV_COLUMNS) + "\n")
        assert main(["report", str(stub), "--out", str(tmp_path / "p")]) == 4

    def test_unknown_metric_name(self, pipeline, tmp_path):
        code = main(["report", str(pipeline["eval_mems"] / "metrics.csv"),
                     "--metrics", "f1", "--out", str(tmp_path / "p")])
        assert code == 4


class TestExitCodes:
    def test_invalid_config_json(self, tmp_path):
        config = tmp_path / "broken.json"
        config.write_text("{oops")
        code = main(["phantom", "--config", str(config), "--out", str(tmp_path / "d")])
        assert code == 2

    def test_missing_checkpoint_is_an_io_error(self, tmp_path):
        code = main(["eval", "--checkpoint", str(tmp_path / "nope.evdf"),
                     "--dataset", str(tmp_path), "--out", str(tmp_path / "o")])
        assert code == 3

    def test_corrupt_dataset_is_a_runtime_error(self, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        (data / "manifest.json").write_text("{}")
        (data / "manifest.json").write_text("not json at all")
        code = main(["train", "--dataset", str(data), "--epochs", "1",
                     "--out", str(tmp_path / "run")])
        assert code == 4


def test_console_script_help():
    exe = shutil.which("evidseg")
    if exe is None:
        pytest.skip("console script not installed")
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "phantom" in proc.stdout and "report" in proc.stdout


def test_module_invocation_runs():
    proc = subprocess.run(
        [sys.executable, "-c", "import evidseg.cli as c, sys; sys.exit(c.main(['--help']))"],
        capture_output=True,
        text=True,
    )
    # argparse prints help and exits 0
    assert proc.returncode == 0
    assert "subcommand" in proc.stdout or "phantom" in proc.stdout
