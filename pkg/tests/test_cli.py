import csv
import json
import subprocess
import sys

import pytest

from levy_exploration.cli import ConfigError, main, parse_mu, resolve_config


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def _json(path):
    return json.loads(path.read_text())


class TestCommands:
    def test_verify_invariants(self, tmp_path, capsys):
        assert _run(tmp_path, "verify-invariants", "--n-cases", "50") == 0
        d = tmp_path / "verify-invariants"
        with open(d / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 12 and all(r["pass"] == "1" for r in rows)
        assert capsys.readouterr().out.count("PASS") == 12

    def test_resolvent_report(self, tmp_path):
        code = _run(tmp_path, "resolvent", "--lambda", "1", "--mu", "1:0.5", "--n-paths", "300", "--seed", "1")
        assert code == 0
        d = _json(tmp_path / "resolvent" / "resolvent.json")
        for key in ("estimate", "se", "target", "z", "bias_budget", "pass", "params", "config"):
            assert key in d
        assert d["config"]["test"]["mu"] == "1:0.5"
        assert "out" not in d["config"]["run"]

    def test_simulate_writes_paths(self, tmp_path):
        assert _run(tmp_path, "simulate", "--n-paths", "3", "--horizon", "0.1") == 0
        assert len(list((tmp_path / "simulate").glob("path_*.csv"))) == 3

    def test_seed_reproducible(self, tmp_path):
        args = ["tilt-check", "--seed", "42"]
        assert _run(tmp_path / "a", *args) == 0
        assert _run(tmp_path / "b", *args) == 0
        a = sorted(p.name for p in (tmp_path / "a" / "tilt-check").iterdir())
        assert a == sorted(p.name for p in (tmp_path / "b" / "tilt-check").iterdir())
        for name in a:
            assert (tmp_path / "a" / "tilt-check" / name).read_bytes() == (tmp_path / "b" / "tilt-check" / name).read_bytes()

    def test_seed_reproducible_mc(self, tmp_path):
        args = ["martingale", "--seed", "42", "--n-paths", "100", "--grid", "0.1,0.2"]
        _run(tmp_path / "a", *args)
        _run(tmp_path / "b", *args)
        sa = (tmp_path / "a" / "martingale" / "summary.csv").read_bytes()
        assert sa == (tmp_path / "b" / "martingale" / "summary.csv").read_bytes()

    def test_env_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LEVY_EXPLORATION_OUT", str(tmp_path / "env"))
        assert main(["metric-check", "--n-cases", "20"]) == 0
        assert (tmp_path / "env" / "metric-check" / "summary.csv").exists()

    def test_console_script_module(self, tmp_path):
        r = subprocess.run(
            [sys.executable, "-m", "levy_exploration.cli", "tilt-check", "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert r.returncode == 0 and "PASS" in r.stdout


class TestConfig:
    def test_errors_exit_2(self, tmp_path, capsys):
        assert _run(tmp_path, "resolvent", "--n-paths", "-3", "--lambda", "x") == 2
        err = capsys.readouterr().err
        assert "config error: run.n_paths:" in err
        assert "config error: test.lambda:" in err

    def test_bad_mechanism(self, tmp_path, capsys):
        assert _run(tmp_path, "tilt-check", "--alpha", "2.5") == 2
        assert "mechanism.alpha" in capsys.readouterr().err

    def test_file_then_flags(self, tmp_path):
        ini = tmp_path / "c.ini"
        ini.write_text("[run]\nseed = 7\nn_paths = 50\n\n[mechanism]\nalpha = 1.3\n\n[test]\nlambda = 2\n")
        cfg = resolve_config("resolvent", {"run": {"seed": "7", "n_paths": "50"}, "mechanism": {"alpha": "1.3"}, "test": {"lambda": "2"}}, {"run.seed": "8"})
        assert cfg["run"]["seed"] == 8 and cfg["run"]["n_paths"] == 50
        assert cfg["test"]["lambda"] == 2.0
        code = main(["resolvent", "--config", str(ini), "--seed", "8", "--out", str(tmp_path / "o")])
        d = _json(tmp_path / "o" / "resolvent" / "resolvent.json")
        assert code in (0, 1)
        assert d["config"]["run"]["seed"] == 8 and d["config"]["mechanism"]["alpha"] == "1.3"

    def test_unknown_section(self, tmp_path, capsys):
        ini = tmp_path / "c.ini"
        ini.write_text("[runn]\nseed = 1\n")
        assert main(["tilt-check", "--config", str(ini), "--out", str(tmp_path)]) == 2
        assert "runn" in capsys.readouterr().err

    def test_resolve_raises(self):
        with pytest.raises(ConfigError) as e:
            resolve_config("duality", None, {"test.r0": "0"})
        assert e.value.errors[0][0] == "test.r0"

    def test_parse_mu(self):
        mu = parse_mu("1:0.5, 3:0.2")
        assert list(mu) == [(1.0, 0.5), (3.0, 0.2)]
        assert parse_mu("").is_zero
        with pytest.raises(ValueError):
            parse_mu("1:-0.5")
