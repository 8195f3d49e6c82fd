import csv
import json
import re

import pytest

from evbattery.cli import main

SMALL = {"generate": {"n_normal": 6, "n_anomalous": 5, "snippets_per_vehicle": 12}}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return p


@pytest.fixture
def dataset(tmp_path, cfg_path):
    out = tmp_path / "data"
    assert main(["generate", "--config", str(cfg_path), "--seed", "3", "--out", str(out)]) == 0
    return out


def test_generate_outputs(dataset, capsys):
    assert (dataset / "dataset.jsonl").exists() and (dataset / "manifest.json").exists()
    resolved = json.loads((dataset / "config.json").read_text())
    assert resolved["seed"] == 3 and resolved["generate"]["n_normal"] == 6
    manifest = json.loads((dataset / "manifest.json").read_text())
    assert len(manifest["vehicles"]) == 11
    assert sum(m["n_snippets"] for m in manifest["vehicles"]) == 11 * 12


def test_generate_seed_repeat_identical(tmp_path, cfg_path, dataset):
    again = tmp_path / "again"
    main(["generate", "--config", str(cfg_path), "--seed", "3", "--out", str(again)])
    assert (again / "dataset.jsonl").read_bytes() == (dataset / "dataset.jsonl").read_bytes()


def test_generate_anonymize_toggle(tmp_path, cfg_path, dataset):
    anon = tmp_path / "anon"
    main(["generate", "--config", str(cfg_path), "--seed", "3", "--out", str(anon),
          "--anonymize", "true"])
    assert json.loads((anon / "config.json").read_text())["generate"]["anonymize"] is True
    assert (anon / "dataset.jsonl").read_bytes() != (dataset / "dataset.jsonl").read_bytes()


def test_generate_toml_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("seed = 4\n[generate]\nn_normal = 2\nn_anomalous = 0\nrecords_per_vehicle = 2\n")
    assert main(["generate", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "config.json").read_text())["seed"] == 4


def test_detect_variance(tmp_path, dataset, capsys):
    before = (dataset / "dataset.jsonl").read_bytes()
    out = tmp_path / "var"
    assert main(["detect", "--data", str(dataset), "--detector", "variance", "--out", str(out),
                 "--seed", "1"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["rounds"]) == 5 and all(r["train_loss"] == [] for r in rep["rounds"])
    assert all(r["h"] is None for r in rep["rounds"])
    for r in range(5):
        assert (out / f"roc_round{r}.csv").exists()
    with open(out / "roc_mean.csv") as fh:
        assert len(list(csv.reader(fh))) == 102
    assert json.loads((out / "config.json").read_text())["detector"] == "variance"
    assert (dataset / "dataset.jsonl").read_bytes() == before


def test_detect_ae_in_memory(tmp_path, cfg_path):
    cfg = dict(SMALL, ae={"epochs": 1})
    p = tmp_path / "ae.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "ae"
    assert main(["detect", "--config", str(p), "--detector", "ae", "--out", str(out)]) == 0
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["ae"]["epochs"] == 1 and "generate" in resolved


def test_capacity_ridge_and_report(tmp_path, dataset, capsys):
    out = tmp_path / "ridge"
    assert main(["capacity", "--data", str(dataset), "--regressor", "ridge", "--out",
                 str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["rounds"]) == 5
    with open(out / "predictions.csv") as fh:
        n_rows = len(list(csv.reader(fh))) - 1
    manifest_labels = sum(1 for line in (dataset / "dataset.jsonl").read_text().splitlines()
                          if '"capacity_label":null' not in line)
    assert n_rows == manifest_labels
    var = tmp_path / "var"
    main(["detect", "--data", str(dataset), "--detector", "variance", "--out", str(var)])
    capsys.readouterr()
    table = tmp_path / "table"
    assert main(["report", str(var), str(out), "--out", str(table)]) == 0
    text = capsys.readouterr().out
    assert text.index("ridge") < text.index("variance")
    with open(table / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["algorithm"] for r in rows] == ["ridge", "variance"]
    summary = json.loads((var / "report.json").read_text())["summary"]
    assert rows[1]["mean_std"] == (f"{100 * summary['auroc_mean']:.1f}"
                                   f"±{100 * summary['auroc_std']:.1f}")
    assert re.fullmatch(r"\d+\.\d\d±\d+\.\d\d", rows[0]["mean_std"])


def test_report_single_run(tmp_path, dataset, capsys):
    var = tmp_path / "var"
    main(["detect", "--data", str(dataset), "--detector", "variance", "--out", str(var)])
    capsys.readouterr()
    assert main(["report", str(var)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3  # header, rule, one row


def test_exit_codes(tmp_path, dataset, capsys):
    with pytest.raises(SystemExit) as e:
        main(["detect", "--detector", "bogus", "--out", str(tmp_path)])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 1
    assert main(["detect", "--data", str(dataset), "--folds", "1", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 1
    # too few anomalous vehicles for 5 folds is a protocol error
    few = tmp_path / "few.json"
    few.write_text(json.dumps({"generate": {"n_normal": 6, "n_anomalous": 2,
                                            "snippets_per_vehicle": 4}}))
    assert main(["detect", "--config", str(few), "--detector", "variance",
                 "--out", str(tmp_path / "y")]) == 2
    assert main(["report", str(tmp_path / "missing")]) == 2
    assert main(["detect", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "z")]) == 2
