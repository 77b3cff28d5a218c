import numpy as np
import pytest

from drls.cli import main
from drls.topology import from_edges, read_edge_list, write_edge_list

SMALL_CONFIG = """
topology.j = 5
topology.radius = 0.8
topology.seed = 1
scenario.p = 2
scenario.seed = 1
T = 60
runs = 3
master_seed = 0
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(SMALL_CONFIG)
    return str(path)


def test_gen_topology(tmp_path, capsys):
    out = tmp_path / "net"
    code = main(["gen-topology", "--j", "6", "--radius", "0.7",
                 "--seed", "3", "--out", str(out)])
    assert code == 0
    top = read_edge_list(out / "topology.txt")
    assert top.J == 6
    stdout = capsys.readouterr().out
    assert "algebraic connectivity" in stdout
    assert "sensors: 6" in stdout


def test_gen_topology_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["gen-topology", "--seed", "5", "--out", str(a)]) == 0
    assert main(["gen-topology", "--seed", "5", "--out", str(b)]) == 0
    assert (a / "topology.txt").read_bytes() == (b / "topology.txt").read_bytes()


def test_simulate_writes_learning_curves(tmp_path, config_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--config", config_path, "--out", str(out)])
    assert code == 0
    global_lines = (out / "global.csv").read_text().strip().splitlines()
    assert global_lines[0] == "t,msd_lin,msd_db,emse_lin,emse_db,mse_lin,mse_db"
    assert len(global_lines) == 61
    sensor_lines = (out / "per_sensor.csv").read_text().strip().splitlines()
    assert len(sensor_lines) == 1 + 60 * 5
    stdout = capsys.readouterr().out
    assert "steady-state MSD" in stdout


def test_simulate_threads_override_keeps_bytes(tmp_path, config_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", config_path, "--out", str(a)]) == 0
    assert main(["simulate", "--config", config_path, "--out", str(b),
                 "--threads", "2"]) == 0
    assert (a / "global.csv").read_bytes() == (b / "global.csv").read_bytes()


def test_predict(tmp_path, config_path, capsys):
    out = tmp_path / "pred"
    code = main(["predict", "--config", config_path, "--out", str(out)])
    assert code == 0
    lines = (out / "prediction.csv").read_text().strip().splitlines()
    assert lines[0].startswith("sensor_id,")
    assert len(lines) == 1 + 5 + 1
    stdout = capsys.readouterr().out
    assert "fluctuation spectral radius" in stdout
    assert "mean-stability bound" in stdout


def test_compare(tmp_path, config_path, capsys):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", config_path, "--out", str(out),
                 "--tol-db", "50"])
    assert code == 0
    assert (out / "comparison.csv").exists()
    assert (out / "prediction.csv").exists()
    assert (out / "global.csv").exists()
    stdout = capsys.readouterr().out
    assert "metric" in stdout and "delta_db" in stdout


def test_compare_tolerance_miss_still_exits_zero(tmp_path, config_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--config", config_path, "--out", str(out),
                 "--tol-db", "1e-9"])
    assert code == 0
    text = (out / "comparison.csv").read_text()
    assert ",false" in text


def test_stability_stable_config(tmp_path, config_path, capsys):
    code = main(["stability", "--config", config_path, "--out", str(tmp_path)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "mean-stable: true" in stdout
    assert "mean-square stable: true" in stdout


def test_stability_unstable_config(tmp_path, capsys):
    path = tmp_path / "hot.cfg"
    path.write_text(SMALL_CONFIG + "c = 1000.0\n")
    code = main(["stability", "--config", str(path), "--out", str(tmp_path)])
    assert code == 2
    assert "mean-square stable: false" in capsys.readouterr().out


def test_predict_unstable_exits_two(tmp_path, capsys):
    path = tmp_path / "hot.cfg"
    path.write_text(SMALL_CONFIG + "c = 1000.0\n")
    code = main(["predict", "--config", str(path), "--out", str(tmp_path)])
    assert code == 2
    assert "spectral radius" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path, capsys):
    code = main(["simulate", "--config", str(tmp_path / "ghost.cfg"),
                 "--out", str(tmp_path)])
    assert code == 1
    assert "ghost.cfg" in capsys.readouterr().err


def test_bad_config_key_exits_one(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("turbo = on\n")
    code = main(["predict", "--config", str(path), "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "unknown key" in err and "bad.cfg:1" in err


def test_usage_error_exits_one(capsys):
    assert main([]) == 1
    assert main(["simulate"]) == 1   # --config is required
    capsys.readouterr()


def test_divergent_run_exits_three(tmp_path, capsys):
    net = tmp_path / "pair.txt"
    write_edge_list(from_edges(2, [(0, 1)]), net)
    path = tmp_path / "diverge.cfg"
    path.write_text(
        f"topology.kind = edgelist\ntopology.path = {net}\n"
        "scenario.p = 1\nc = 5000.0\nT = 400\nruns = 1\n"
    )
    code = main(["simulate", "--config", str(path), "--out", str(tmp_path)])
    assert code == 3
    assert "non-finite" in capsys.readouterr().err


def test_seed_override_changes_results(tmp_path, config_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", config_path, "--out", str(a)]) == 0
    assert main(["simulate", "--config", config_path, "--out", str(b),
                 "--seed", "99"]) == 0
    assert (a / "global.csv").read_bytes() != (b / "global.csv").read_bytes()
