import csv
import json

import pytest

from explore_rl.cli import main
from explore_rl.mdp_core import load_mdp, validate


def write_config(tmp_path, **extra):
    data = {
        "env": {"name": "chain", "params": {"n": 3}},
        "algo": {"name": "ucb_q"},
        "epsilon": 0.5,
        "gamma": 0.7,
        "T": 200,
        "seeds": 2,
        "output_dir": str(tmp_path / "out"),
    }
    data.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_derive_params(capsys):
    assert main(["derive-params", "--epsilon", "0.1", "--gamma", "0.9", "--delta", "0.05"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["r_horizon"] == 58 and out["m_segments"] == 33


def test_derive_params_bad_gamma(capsys):
    assert main(["derive-params", "--epsilon", "0.1", "--gamma", "0.3", "--delta", "0.05"]) == 2
    assert "gamma" in capsys.readouterr().err


@pytest.mark.parametrize("name,params,states", [("hard", ["epsilon=0.05"], 3), ("chain", ["n=4"], 4), ("lift", ["S=2", "horizon=3"], 6)])
def test_gen_env(tmp_path, name, params, states):
    out = tmp_path / f"{name}.json"
    assert main(["gen-env", name, *params, "-o", str(out)]) == 0
    mdp = load_mdp(out)
    assert mdp.num_states == states
    assert validate(mdp) == []


def test_run_single_seed(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", str(cfg), "--seed", "1"]) == 0
    row = json.loads(capsys.readouterr().out)
    assert row["seed"] == 1 and row["status"] == "ok"


def test_run_refuses_a_grid(tmp_path, capsys):
    cfg = write_config(tmp_path, epsilon=[0.5, 0.3])
    assert main(["run", str(cfg)]) == 2
    assert "sweep" in capsys.readouterr().err


def test_sweep_then_plot_data(tmp_path):
    cfg = write_config(tmp_path, epsilon=[0.5, 0.3])
    assert main(["sweep", str(cfg), "--workers", "1"]) == 0
    summary = tmp_path / "out" / "summary.csv"
    tidy, slopes = tmp_path / "tidy.csv", tmp_path / "slopes.csv"
    code = main(
        ["plot-data", str(summary), "--x", "epsilon", "--y", "total_mistakes", "--group-by", "algo",
         "-o", str(tidy), "--slopes", str(slopes), "--invert-x"]
    )
    assert code == 0
    with open(tidy) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and all(r["n"] == "2" for r in rows)
    assert slopes.exists()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, epsilonn=0.1)
    assert main(["sweep", str(cfg)]) == 2
    assert "epsilonn" in capsys.readouterr().err
