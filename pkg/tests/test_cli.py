"""CLI subcommands: artifacts, manifests, exit codes, schema digest guard."""

import json

import pytest

from hiddenpop.cli import main
from conftest import small_config


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    """One synth+train run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert main(["synth", "--out", str(data), "--n-register", "6000"]) == 0
    train = root / "train"
    assert main([
        "train", "--data-dir", str(data), "--out", str(train),
        "--trees", "30", "--k", "5", "--jobs", "2", "--seed", "0",
    ]) == 0
    return root, data, train


def test_synth_artifacts_and_manifest(cli_run):
    _root, data, _train = cli_run
    for name in ["admin.csv", "survey.csv", "screened_out.csv", "names.csv",
                 "truth.csv", "synth_meta.json", "run_manifest.json"]:
        assert (data / name).exists()
    manifest = json.loads((data / "run_manifest.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert manifest["seed"] == small_config().seed  # config default, not 0
    assert all(len(d) == 64 for d in manifest["outputs"].values())


def test_train_artifacts(cli_run):
    _root, _data, train = cli_run
    for name in ["schema.json", "correlation.csv", "model_logistic.json",
                 "model_forest.json", "roc_logistic.csv", "cv_logistic.csv",
                 "importance_forest.csv", "metrics.csv", "metrics.md",
                 "run_manifest.json"]:
        assert (train / name).exists()
    manifest = json.loads((train / "run_manifest.json").read_text())
    assert manifest["inputs"]  # digests of the data files


def test_ingest_summary(cli_run, tmp_path):
    _root, data, _train = cli_run
    out = tmp_path / "ingest"
    assert main(["ingest", "--data-dir", str(data), "--out", str(out)]) == 0
    text = (out / "linkage_summary.csv").read_text()
    assert "matched,1096" in text  # 312 + 382 + 402


def test_evaluate_impute_report_chain(cli_run, tmp_path):
    _root, data, train = cli_run
    ev = tmp_path / "eval"
    assert main(["evaluate", "--data-dir", str(data), "--out", str(ev),
                 "--model-file", str(train / "model_logistic.json")]) == 0
    assert (ev / "metrics.csv").exists()

    imp = tmp_path / "impute"
    assert main(["impute", "--data-dir", str(data), "--out", str(imp),
                 "--model-file", str(train / "model_logistic.json")]) == 0
    assert (imp / "expanded_register.csv").exists()
    assert (imp / "distribution.csv").exists()

    rep = tmp_path / "report"
    assert main(["report", "--data-dir", str(data), "--out", str(rep),
                 "--expanded", str(imp / "expanded_register.csv")]) == 0
    assert (rep / "bias_report.csv").exists()
    assert (rep / "bias_plots" / "bias_gender.csv").exists()


def test_schema_digest_guard(cli_run, tmp_path):
    _root, data, train = cli_run
    tampered = tmp_path / "tampered"
    tampered.mkdir()
    model = tampered / "model_logistic.json"
    model.write_bytes((train / "model_logistic.json").read_bytes())
    sidecar = (train / "schema.json").read_text()
    (tampered / "schema.json").write_text(sidecar.replace("gender=M", "gender=X"))
    out = tmp_path / "eval"
    code = main(["evaluate", "--data-dir", str(data), "--out", str(out),
                 "--model-file", str(model)])
    assert code == 3


def test_missing_data_dir_is_data_error(tmp_path, monkeypatch):
    monkeypatch.delenv("HIDDENPOP_DATA_DIR", raising=False)
    assert main(["train", "--out", str(tmp_path / "o")]) == 3
    assert main(["train", "--data-dir", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o")]) == 3


def test_env_var_data_dir(cli_run, tmp_path, monkeypatch):
    _root, data, _train = cli_run
    monkeypatch.setenv("HIDDENPOP_DATA_DIR", str(data))
    out = tmp_path / "ingest"
    assert main(["ingest", "--out", str(out)]) == 0


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_pipeline_with_config_override(tmp_path):
    cfg = small_config()
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(cfg.to_json())
    out = tmp_path / "pipe"
    assert main(["pipeline", "--out", str(out), "--config", str(cfg_path),
                 "--model", "logistic", "--k", "0"]) == 0
    assert (out / "impute" / "expanded_register.csv").exists()
    assert (out / "report" / "bias_report.csv").exists()
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["seed"] == cfg.seed
