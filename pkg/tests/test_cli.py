import json
import subprocess
import sys

import pytest

from made_lab.cli import main


def _config(tmp_path, text):
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    return str(path)


SMALL_LOCK = """\
lock:
  env: {depth: 2}
  learner: {episodes: 5}
  learners: [vi]
  bonuses: [made]
  scales: [1.0]
"""


def test_lock_run(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["lock", "--config", _config(tmp_path, SMALL_LOCK), "--seeds", "0..2",
                 "--out", str(out)])
    assert code == 0
    assert f"wrote {out}" in capsys.readouterr().out
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["seeds"] == [0, 1, 2] and resolved["experiment"] == "lock"
    assert (out / "runs" / "vi-made-x1.0-seed2.csv").is_file()


def test_experiment_argument_wins(tmp_path):
    out = tmp_path / "out"
    path = _config(tmp_path, "experiment: meta\n" + SMALL_LOCK)
    assert main(["lock", "--config", path, "--out", str(out), "--check-only"]) == 0
    assert json.loads((out / "resolved_config.json").read_text())["experiment"] == "lock"


@pytest.mark.parametrize("text,args", [
    ("lock:\n  bonuss: [made]\n", []),
    (SMALL_LOCK, ["--seeds", "x"]),
    (SMALL_LOCK, ["--workers", "0"]),
])
def test_config_errors_exit_two(tmp_path, capsys, text, args):
    code = main(["lock", "--config", _config(tmp_path, text), "--out", str(tmp_path / "o"), *args])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_key_message(tmp_path, capsys):
    main(["lock", "--config", _config(tmp_path, "lock:\n  bonuss: [made]\n")])
    assert "lock.bonuss: unknown key" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert main(["lock", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_failed_check_exits_one(tmp_path, capsys):
    text = ("checks: {occupancy_mdps: 1, mc_samples: 10, gradient_mdps: 1, "
            "argmax_instances: 1, trials: 5, k_max: 10, convergence: false}\n")
    code = main(["checks", "--config", _config(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "check failed: occupancy_mc" in capsys.readouterr().err


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "made_lab.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "--check-only" in proc.stdout
