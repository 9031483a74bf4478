import csv
import subprocess
import sys

from glib_lab.cli import build_parser, main
from glib_lab.env import load_domain
from glib_lab.pddl import write_ndrs


def _config(tmp_path, **extra):
    lines = {"domain": "blocks", "interactions": 40, "eval_interval": 20, "eval_samples": 30, "seeds": 1}
    lines.update(extra)
    path = tmp_path / "exp.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


def test_run_writes_csvs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", str(_config(tmp_path)), "--explorer", "glib-l", "--seeds", "2",
                 "--out", str(out), "--no-timing"])
    assert code == 0
    rows = list(csv.reader((out / "blocks_glib-l_curves.csv").open()))
    assert rows[0] == ["seed", "interactions", "prediction_error", "planning_success", "sec_per_iter"]
    assert len(rows) == 1 + 2 * 2
    assert "seed 1: 40 interactions" in capsys.readouterr().out


def test_flags_reach_the_config(tmp_path):
    args = build_parser().parse_args(["run", "--no-goal-filters", "--no-midpolicy-replan", "--explorer", "babble"])
    assert args.no_goal_filters and args.no_midpolicy_replan and args.explorer == "babble"


def test_run_is_byte_stable(tmp_path):
    cfg = _config(tmp_path)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--explorer", "babble", "--out", str(tmp_path / d),
                     "--no-timing"]) == 0
    name = "blocks_babble_curves.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("interactions = lots\n")
    assert main(["run", "--config", str(path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_eval_model_scores_truth(tmp_path, capsys):
    model = tmp_path / "truth.ppddl"
    model.write_text(write_ndrs(load_domain("blocks").truth, "blocks"))
    assert main(["eval-model", "--model", str(model), "--domain", "blocks", "--eval-samples", "50"]) == 0
    out = capsys.readouterr().out
    assert "prediction error 0.000" in out and "planning success 1.00" in out


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "glib_lab.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "eval-model" in res.stdout
