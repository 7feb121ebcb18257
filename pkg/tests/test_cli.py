import hashlib
import json
import subprocess
import sys

import pytest

from prunenet.cli import main
from prunenet.checkpoint import load_checkpoint
from prunenet.model import models_equal

SYNTH = ["synth", "--d-hidden", "16", "--d-intermediate", "64", "--layers", "3", "--vocab", "20", "--heads", "2"]


def _digest(path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.iterdir()) if p.is_file()}


def run_pipeline(root, seed="4"):
    assert main(SYNTH + ["--seed", seed, "--out", str(root / "m")]) == 0
    assert main(["spectrum", "--model", str(root / "m"), "--out", str(root / "s")]) == 0
    assert main(["train-policy", "--model", str(root / "m"), "--ratio", "0.3", "--episodes", "3",
                 "--seed", seed, "--out", str(root / "p")]) == 0
    assert main(["train-policy", "--model", str(root / "m"), "--ratio", "0.3", "--episodes", "2",
                 "--seed", seed, "--target", "attn", "--out", str(root / "pa")]) == 0
    assert main(["prune", "--model", str(root / "m"), "--policy", str(root / "p"), "--attn-policy",
                 str(root / "pa"), "--ratio", "0.3", "--target", "both", "--seed", seed,
                 "--out", str(root / "c")]) == 0
    assert main(["report", "--original", str(root / "m"), "--compressed", str(root / "c"),
                 "--out", str(root / "r")]) == 0
    assert main(["eval-drift", "--original", str(root / "m"), "--compressed", str(root / "c"),
                 "--probes", "2", "--seed", seed, "--out", str(root / "d")]) == 0


def test_threshold(capsys):
    assert main(["threshold", "--d-hidden", "2560", "--d-intermediate", "10240"]) == 0
    assert capsys.readouterr().out.strip() == "0.2941"


def test_bad_ratio_exit_1(tmp_path, capsys):
    assert main(SYNTH + ["--out", str(tmp_path / "m")]) == 0
    code = main(["prune", "--model", str(tmp_path / "m"), "--selector", "random", "--ratio", "1.5",
                 "--out", str(tmp_path / "x")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert "[0, 1)" in err["message"]


def test_ratio_list_length_mismatch(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path / "m")]) == 0
    assert main(["prune", "--model", str(tmp_path / "m"), "--selector", "random", "--ratio", "0.1,0.2",
                 "--out", str(tmp_path / "x")]) == 1


def test_bad_config_exit_1(tmp_path):
    assert main(["synth", "--d-hidden", "16", "--d-intermediate", "8", "--layers", "1", "--vocab", "4",
                 "--out", str(tmp_path / "m")]) == 1


def test_missing_input_exit_2(tmp_path, capsys):
    assert main(["report", "--original", str(tmp_path / "no"), "--compressed", str(tmp_path / "no")]) == 2
    assert "error" in json.loads(capsys.readouterr().err)


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--d-hidden", "4"])
    assert exc.value.code == 2


def test_pipeline_outputs(tmp_path):
    run_pipeline(tmp_path)
    for sub in ("m", "s", "p", "pa", "c", "r", "d"):
        manifest = json.loads((tmp_path / sub / "run.json").read_text())
        assert manifest["tool_version"] and "started_at" in manifest and "arguments" in manifest
    header, first = (tmp_path / "s" / "spectrum.csv").read_text().splitlines()[:2]
    assert header == "layer,index,singular_value" and first.startswith("0,0,")
    assert set(json.loads((tmp_path / "p" / "history.json").read_text())["episodes"][0]) >= {
        "per_layer_penalty", "returns", "loss", "grad_norm"}
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert 0 < report["effective_sparsity"] <= report["sparsity_ratio"] + 0.05
    assert report["flops_ratio"] > 1
    assert (tmp_path / "r" / "layers.csv").read_text().startswith("layer,kept_rows,ks_distance\n")
    pruned = load_checkpoint(tmp_path / "c")
    assert [layer.ffn.n_rows for layer in pruned.layers] == [45] * 3
    plan = json.loads((tmp_path / "c" / "plan.json").read_text())
    assert [row["ffn_kept_rows"] for row in plan["layers"]] == [45] * 3


def test_pipeline_byte_identical(tmp_path):
    run_pipeline(tmp_path / "a")
    run_pipeline(tmp_path / "b")
    for sub in ("m", "s", "p", "pa", "c", "r", "d"):
        da, db = _digest(tmp_path / "a" / sub), _digest(tmp_path / "b" / sub)
        da.pop("run.json"), db.pop("run.json")
        assert da == db, sub


def test_inputs_not_mutated(tmp_path):
    assert main(SYNTH + ["--out", str(tmp_path / "m")]) == 0
    before = _digest(tmp_path / "m")
    assert main(["prune", "--model", str(tmp_path / "m"), "--selector", "random", "--ratio", "0.5",
                 "--out", str(tmp_path / "c")]) == 0
    assert _digest(tmp_path / "m") == before


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNENET_SEED", "17")
    assert main(SYNTH + ["--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a" / "run.json").read_text())["seed"] == 17
    monkeypatch.delenv("PRUNENET_SEED")
    assert main(SYNTH + ["--seed", "17", "--out", str(tmp_path / "b")]) == 0
    assert models_equal(load_checkpoint(tmp_path / "a"), load_checkpoint(tmp_path / "b"))


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "prunenet", "threshold", "--d-hidden", "4096", "--d-intermediate", "11008"],
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "0.2823"


def test_threshold_writes_manifest(tmp_path):
    assert main(["threshold", "--d-hidden", "64", "--d-intermediate", "64", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "threshold.json").read_text())["threshold"] == 0.25
    assert json.loads((tmp_path / "run.json").read_text())["command"] == "threshold"
