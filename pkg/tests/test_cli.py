import json
import shutil
import subprocess

import numpy as np
import pytest

from rlmh.cli import main
from rlmh.laplace import factorize
from rlmh.policy import MlpParams, Policy, save_policy

from .helpers import tiny_config


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.json"
    cfg = tiny_config(family="bimodal", method="rlmh", output_dir=str(tmp_path / "out"))
    path.write_text(json.dumps(cfg))
    return path


def test_run_prints_summary(config_file, tmp_path, capsys):
    assert main(["run", str(config_file)]) == 0
    out = capsys.readouterr().out.strip().split("\n")
    assert out[0].startswith("method,target,n_seeds,esjd_mean")
    assert out[1].startswith("rlmh,bimodal,1,")
    assert (tmp_path / "out" / "rlmh" / "seed_0" / "policy.json").is_file()


def test_seed_and_out_dir_override(config_file, tmp_path, capsys):
    out_dir = tmp_path / "elsewhere"
    assert main(["run", str(config_file), "--seed", "4", "--seed", "5",
                 "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "rlmh" / "seed_4").is_dir() and (out_dir / "rlmh" / "seed_5").is_dir()
    assert not (tmp_path / "out").exists()
    assert capsys.readouterr().out.strip().split("\n")[1].startswith("rlmh,bimodal,2,")


def test_compare_runs_all_methods(config_file, tmp_path, capsys):
    assert main(["compare", str(config_file), "--out-dir", str(tmp_path / "cmp")]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert [line.split(",")[0] for line in lines[1:]] == ["rlmh", "arwmh", "amala"]


def test_preset_flag(tmp_path, capsys):
    path = tmp_path / "exp.toml"
    path.write_text('method = "arwmh"\n[target]\nfamily = "gaussian"\nparams = { dim = 1 }\n'
                    'n_reference = 100\n[arwmh]\nn_iter = 50\n')
    assert main(["run", str(path), "--preset", "smoke", "--out-dir", str(tmp_path / "o")]) == 0
    metrics = (tmp_path / "o" / "arwmh" / "seed_0" / "metrics.csv").read_text().split("\n")[1]
    assert metrics.split(",")[-1] == "500"  # smoke n_eval


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"target": {"family": "bimodal"}, "foo": 1}))
    assert main(["run", str(path)]) == 2
    assert "foo" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_policy_slice(tmp_path, capsys):
    pol = Policy(MlpParams.zeros((1, 3, 1)), np.array([50.0]), factorize(np.eye(1)), 1.0)
    ckpt = save_policy(pol, tmp_path / "p.json")
    assert main(["policy-slice", str(ckpt), "--grid=-1:1:11"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "x1,phi1" and len(lines) == 12
    out = tmp_path / "slice.csv"
    assert main(["policy-slice", str(ckpt), "--grid", "0:1:3", "--out", str(out)]) == 0
    assert out.read_text().count("\n") == 4


def test_policy_slice_rejects_high_dimension(tmp_path, capsys):
    pol = Policy(MlpParams.zeros((3, 2, 3)), np.zeros(3), factorize(np.eye(3)), 1.0)
    ckpt = save_policy(pol, tmp_path / "p.json")
    assert main(["policy-slice", str(ckpt), "--grid", "0:1:3"]) == 2
    assert "d <= 2" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("rlmh") is None, reason="console script not installed")
def test_console_script(config_file, tmp_path):
    proc = subprocess.run(["rlmh", "run", str(config_file), "--out-dir", str(tmp_path / "s")],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("method,target")
