"""Configuration ingestion and the command-line surface."""

import json

import numpy as np
import pytest

from relupde.cli import main
from relupde.config import parse_config
from relupde.errors import ConfigError
from relupde.network import ReluNetwork, save_network

MINIMAL = """
[problem]
alpha = 1e-2
[problem.grid]
n = [8, 8]
[problem.nonlinearity]
kind = "builtin"
name = "relu"
[problem.desired_state]
preset = "eigenmode"
"""


def write(tmp_path, text, name="conf.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_minimal_config(self, tmp_path):
        problem, cfg = parse_config(write(tmp_path, MINIMAL))
        assert problem.grid.shape == (8, 8)
        assert problem.nl.name == "relu"
        assert problem.nl.monotone_certified
        assert cfg.seed == 0
        assert len(cfg.config_hash) == 12

    def test_unknown_key_named(self, tmp_path):
        bad = MINIMAL + "\n[problem.solver]\nnewton_tol = 1e-10\nnewtn_max = 3\n"
        with pytest.raises(ConfigError, match="newtn_max"):
            parse_config(write(tmp_path, bad))

    def test_bound_violation_names_node(self, tmp_path):
        bad = MINIMAL + "\n[problem.bounds]\nlower = 1.0\nupper = -1.0\n"
        with pytest.raises(ConfigError, match="node"):
            parse_config(write(tmp_path, bad))

    def test_network_dimension_mismatch_rejected(self, tmp_path):
        net = ReluNetwork([[[0.0, 1.0]], [[1.0]]], [[0.0], [0.0]])  # 1 spatial dim
        save_network(net, tmp_path / "net.json")
        bad = """
[problem]
alpha = 1.0
[problem.grid]
n = [6, 6]
[problem.nonlinearity]
kind = "network"
path = "net.json"
"""
        with pytest.raises(ConfigError, match="input_dim"):
            parse_config(write(tmp_path, bad))

    def test_eps_schedule_must_decrease(self, tmp_path):
        bad = MINIMAL + "\n[optimize]\neps_schedule = [1e-2, 1e-1]\n"
        with pytest.raises(ConfigError, match="decreasing"):
            parse_config(write(tmp_path, bad))

    def test_certify_block_runs_check(self, tmp_path):
        conf = """
[problem]
alpha = 1.0
[problem.grid]
n = [6, 6]
[problem.nonlinearity]
kind = "knot_table"
knots = [0.0, 1.0]
values = [0.0, -0.5]
end_slopes = [0.0, 0.0]
certify = { y_halfwidth = 3.0, y_samples = 65 }
"""
        problem, _ = parse_config(write(tmp_path, conf))
        assert not problem.nl.monotone_certified

    def test_network_round_trip_through_config(self, tmp_path):
        net = ReluNetwork([[[0.0, 0.0, 1.0]], [[1.0]]], [[0.0], [0.0]],
                          monotone=True)
        save_network(net, tmp_path / "net.json")
        conf = """
[problem]
alpha = 1.0
[problem.grid]
n = [6, 6]
[problem.nonlinearity]
kind = "network"
path = "net.json"
"""
        problem, _ = parse_config(write(tmp_path, conf))
        assert problem.nl.kind == "network"


LQ_PIPELINE = """
seed = 0
[problem]
alpha = 1e-2
[problem.grid]
n = [10, 10]
[problem.nonlinearity]
kind = "builtin"
name = "zero"
[problem.desired_state]
preset = "eigenmode"
[problem.solver]
newton_tol = 1e-12
cg_tol = 1e-13

[optimize]
eps_schedule = [1e-2, 1e-3]
stop_tol = 1e-8

[check]
directions = 5
"""


class TestCLI:
    def test_solve_writes_state(self, tmp_path):
        conf = write(tmp_path, MINIMAL + '\n[solve]\ncontrol = { preset = "bump", scale = 2.0 }\n')
        out = tmp_path / "out"
        assert main(["solve", "--config", str(conf), "--out", str(out)]) == 0
        assert (out / "y.csv").exists()
        meta = json.loads((out / "solve.json").read_text())
        assert meta["final_residual"] <= 1e-10

    def test_check_exit_zero_on_lq(self, tmp_path):
        conf = write(tmp_path, LQ_PIPELINE)
        out = tmp_path / "out"
        assert main(["check", "--config", str(conf), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["verdicts"]["strong"] == "pass"
        assert (out / "history.csv").exists()

    def test_corrupt_network_file_exits_one(self, tmp_path, capsys):
        (tmp_path / "net.json").write_text('{"input_dim": 3, "layers": [{"weights": [[0.0]]}]}')
        conf = write(tmp_path, """
[problem]
alpha = 1.0
[problem.grid]
n = [6, 6]
[problem.nonlinearity]
kind = "network"
path = "net.json"
""")
        assert main(["solve", "--config", str(conf), "--out", str(tmp_path / "o")]) == 1
        assert "bias" in capsys.readouterr().err

    def test_missing_config_exits_one(self, tmp_path, capsys):
        assert main(["solve", "--config", str(tmp_path / "nope.toml")]) == 1
        assert "does not exist" in capsys.readouterr().err

    def test_pipeline_determinism_bytes(self, tmp_path):
        conf = write(tmp_path, LQ_PIPELINE)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["check", "--config", str(conf), "--out", str(out)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert outs[0].keys() == outs[1].keys()
        for name in outs[0]:
            assert outs[0][name] == outs[1][name], name

    def test_huge_tol_act_degrades_cq_without_inconsistency(self, tmp_path):
        # inactive bounds everywhere, but a huge activity band marks all
        # nodes active: CQ/CQ_f fail, implications must not fire, and the
        # requested checks still pass
        conf = write(tmp_path, LQ_PIPELINE + """
[problem.bounds]
lower = -100.0
upper = 100.0
""")
        # patch the check block: huge tol_act, only weak/C requested
        text = conf.read_text().replace(
            'directions = 5', 'directions = 5\ntol_act = 1e6\nconditions = ["weak", "C"]')
        conf.write_text(text)
        out = tmp_path / "out"
        assert main(["check", "--config", str(conf), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["verdicts"]["CQ"] == "fail"
        assert report["active_set_fraction"] == 1.0
        assert report["inconsistencies"] == []
