import json

import numpy as np

from distkf import cli


def write_config(path, **overrides):
    cfg = {
        "system": {
            "A": [[0.9, 0.0], [0.0, 1.1]],
            "C": [[1, 0], [0, 1], [1, 1], [1, -1]],
            "Q": [[0.25, 0], [0, 0.25]],
            "R": np.diag([4.0] * 4).tolist(),
        },
        "graph": {"kind": "ring", "m": 4, "weight": 1.0},
        "design": {"zeta": 0.5},
        "sim": {"horizon": 10, "trials": 1, "seed": 9,
                "initial_state_cov": [[1, 0], [0, 1]]},
    }
    for key, val in overrides.items():
        cfg[key] = val
    path.write_text(json.dumps(cfg))
    return path


class TestExitCodes:
    def test_check_ok(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json")
        assert cli.main(["check", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "mahler measure:   1.1" in out
        assert "feasible:         True" in out

    def test_missing_config_file(self):
        assert cli.main(["check", "--config", "/nonexistent.json"]) == 2

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert cli.main(["check", "--config", str(p)]) == 2

    def test_dimension_mismatch(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            system={"A": [[0.9]], "C": [[1, 0]], "Q": [[0.25]], "R": [[4.0]]},
        )
        assert cli.main(["check", "--config", str(cfg)]) == 2

    def test_unobservable(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.json",
            system={"A": [[0.9, 0], [0, 1.1]], "C": [[0, 0]],
                    "Q": [[0.25, 0], [0, 0.25]], "R": [[4.0]]},
            graph={"kind": "custom", "adjacency": [[0.0]]},
        )
        assert cli.main(["check", "--config", str(cfg)]) == 3

    def test_disconnected_graph(self, tmp_path):
        adj = np.zeros((4, 4))
        adj[0, 1] = adj[1, 0] = 1.0
        adj[2, 3] = adj[3, 2] = 1.0
        cfg = write_config(tmp_path / "c.json", graph={"kind": "custom", "adjacency": adj.tolist()})
        assert cli.main(["check", "--config", str(cfg)]) == 3

    def test_infeasible_mahler(self, tmp_path):
        # path graph of 3: bound = 2 < Mahler 2.5
        adj = [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
        cfg = write_config(
            tmp_path / "c.json",
            system={"A": [[2.5]], "C": [[1.0], [1.0], [1.0]],
                    "Q": [[1.0]], "R": np.eye(3).tolist()},
            graph={"kind": "custom", "adjacency": adj},
            design={},
            sim={"horizon": 5, "trials": 1, "seed": 0},
        )
        assert cli.main(["check", "--config", str(cfg)]) == 3

    def test_oversized_matrix_guard(self, tmp_path):
        big = np.eye(65).tolist()
        cfg = write_config(
            tmp_path / "c.json",
            system={"A": big, "C": big, "Q": big, "R": big},
            graph={"kind": "ring", "m": 65},
        )
        assert cli.main(["check", "--config", str(cfg)]) == 2


class TestDesignCommand:
    def test_writes_design_json(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "out"
        assert cli.main(["design", "--config", str(cfg), "--out", str(out)]) == 0
        data = json.loads((out / "design.json").read_text())
        assert data["variant"] == "alg2"
        assert data["message_size"] == 2
        assert data["consensus"]["feasible"] is True
        assert np.asarray(data["decomposition"]["F"]).shape == (4, 2, 2)
        assert (out / "feasibility.txt").exists()


class TestSimulateCommand:
    def test_outputs_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out2)]) == 0
        trace = (out1 / "trace.csv").read_text().splitlines()
        assert len(trace) == 12  # header + horizon + 1
        for name in ("trace.csv", "mse.csv", "covariance.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        cov = json.loads((out1 / "covariance.json").read_text())
        assert cov["variant"] == "alg2"
        assert cov["analytic"] is not None
        assert len(cov["analytic"]["per_node_trace"]) == 4

    def test_trials_override(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "o"
        assert cli.main([
            "simulate", "--config", str(cfg), "--out", str(out), "--trials", "3",
        ]) == 0
        cov = json.loads((out / "covariance.json").read_text())
        assert cov["trials"] == 3

    def test_analytic_skipped_above_size_cap(self, tmp_path):
        out = tmp_path / "o"
        code = cli.main(["simulate", "--example", "example2", "--out", str(out), "--trials", "2"])
        assert code == 0
        cov = json.loads((out / "covariance.json").read_text())
        assert cov["analytic"] is None
        assert "exceeds cap" in cov["analytic_skipped_reason"]
        assert len(cov["empirical_node_mse"]) == 15


class TestFlagForwarding:
    def test_rounds_and_drop_forwarded(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "o"
        code = cli.main([
            "simulate", "--config", str(cfg), "--out", str(out),
            "--trials", "2", "--rounds", "2", "--drop", "0.3",
        ])
        assert code == 0

    def test_config_and_example_conflict(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        assert cli.main(["check", "--config", str(cfg), "--example", "example1"]) == 2

    def test_large_seed_accepted(self, tmp_path):
        cfg = write_config(tmp_path / "c.json")
        out = tmp_path / "o"
        code = cli.main([
            "simulate", "--config", str(cfg), "--out", str(out),
            "--seed", str(2**64 - 1), "--trials", "2",
        ])
        assert code == 0


class TestReproduceCommand:
    def test_example1_smoke(self, tmp_path, capsys):
        out = tmp_path / "rep"
        code = cli.main(["reproduce", "example1", "--trials", "300", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["worst_relative_gap"] < 0.15
        text = capsys.readouterr().out
        assert "variant:          alg2" in text

    def test_example2_smoke(self, tmp_path, capsys):
        out = tmp_path / "rep"
        code = cli.main(["reproduce", "example2", "--trials", "60", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["mean_improvement"] > 0.4
        rows = report["ratios"]
        assert len(rows) == 15
        assert all(r["rho_local"] is not None for r in rows)
        text = capsys.readouterr().out
        assert "variant:          alg1" in text
