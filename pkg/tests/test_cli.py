import csv
import json
import subprocess
import sys

import pytest

from cli_inputs import command_lines, write_inputs
from rbnn.cli import main

EXPECTED = {
    "simulate": ["dataset.csv"],
    "trace": ["nominal_rays.csv"],
    "train": ["checkpoint.json", "report.json"],
    "refine": ["offsets.csv"],
    "predict": ["field.csv"],
    "rayleigh": ["rayleigh.json", "checkpoint.json", "report.json"],
    "rcnn": ["reflection_curve.csv", "checkpoint.json", "report.json"],
    "idw": ["field.csv"],
    "eval": ["metrics.json"],
    "scenario": ["dataset.csv", "rayleigh.json", "checkpoint.json", "report.json"],
}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    files = write_inputs(d)
    out = d / "out"
    codes = {}
    for tag, argv in command_lines(files, out):
        codes[tag] = main(["--seed", "3", "--out", str(out / tag), *argv])
    return out, codes


@pytest.mark.parametrize("tag", list(EXPECTED))
def test_command_writes_outputs(pipeline, tag):
    out, codes = pipeline
    assert codes[tag] == 0
    for name in EXPECTED[tag]:
        assert (out / tag / name).stat().st_size > 0


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_output_formats(pipeline):
    out, _ = pipeline
    assert _rows(out / "simulate" / "dataset.csv")[0] == ["x", "y", "z", "amplitude", "split"]
    assert _rows(out / "trace" / "nominal_rays.csv")[0] == ["theta", "psi", "d", "n_s", "n_b"]
    assert _rows(out / "refine" / "offsets.csv")[0] == ["index", "dx", "dy", "dz"]
    field = _rows(out / "predict" / "field.csv")
    assert field[0] == ["x", "y", "z", "amplitude"] and len(field) == 1 + 7 * 15
    curve = _rows(out / "rcnn" / "reflection_curve.csv")
    assert curve[0] == ["gamma", "eps", "kappa"] and len(curve) == 182
    metrics = json.loads((out / "eval" / "metrics.json").read_text())
    assert metrics["counts"] == 105
    ckpt = json.loads((out / "train" / "checkpoint.json").read_text())
    assert ckpt["kind"] == "geometry" and ckpt["reflection"]["type"] == "rcnn"
    est = json.loads((out / "rayleigh" / "rayleigh.json").read_text())["estimate"]
    assert est["type"] == "rayleigh"


def test_global_flags_after_subcommand(tmp_path):
    files = write_inputs(tmp_path)
    assert main(["trace", "--scene", files["scene"], "--reference", "1,0,5", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "nominal_rays.csv").exists()


def _run(args, tmp_path):
    return subprocess.run([sys.executable, "-m", "rbnn.cli", *args], capture_output=True, text=True, cwd=tmp_path)


def test_usage_error_is_json(tmp_path):
    res = _run(["frobnicate"], tmp_path)
    assert res.returncode == 2
    assert json.loads(res.stderr)["error"] == "UsageError"


def test_missing_file_is_json(tmp_path):
    res = _run(["train", "--data", "nope.csv"], tmp_path)
    assert res.returncode == 1
    err = json.loads(res.stderr)
    assert err["error"] == "FileNotFoundError" and "nope.csv" in err["message"]


def test_invalid_scene_is_json(tmp_path, capsys):
    (tmp_path / "scene.json").write_text(json.dumps({"environment": {"type": "lake"}, "source": [0, 0, 1],
                                                     "frequency": 1}))
    code = main(["trace", "--scene", str(tmp_path / "scene.json"), "--reference", "1,0,1"])
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidArgumentError"


def test_eval_rejects_mismatched_tables(pipeline, capsys):
    out, _ = pipeline
    code = main(["eval", "--pred", str(out / "predict" / "field.csv"), "--truth",
                 str(out / "simulate" / "dataset.csv"), "--out", str(out / "bad")])
    assert code == 1
    assert "same positions" in json.loads(capsys.readouterr().err)["message"]


def test_bad_vector_argument(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["trace", "--scene", "s.json", "--reference", "1,2"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"
