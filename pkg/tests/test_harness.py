import io
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from qtow import cli
from qtow.emit import csv_text, emit, fmt_float, json_text, sidecar_path
from qtow.harness import (BANDIT_HEADER, ConfigError, beta_values, parse_beta_grid, parse_config,
                          parse_state, read_config_file, resolve_state,
                          run_experiment)

SMALL = {"runs": "2", "trials": "200"}


def run_cli(*argv, env=None, cwd=None):
    e = dict(os.environ)
    e.pop("QTOW_SEED", None)
    e.update(env or {})
    return subprocess.run([sys.executable, "-m", "qtow", *argv], capture_output=True, text=True,
                          env=e, cwd=cwd)


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("bandit", environ={})
        assert cfg.seed == 42 and cfg["runs"] == 100 and cfg["trials"] == 20000
        assert cfg["pa"] == 0.8 and cfg["pb"] == 0.2 and cfg["theta"] == 0.1
        assert cfg["estimator"] == "classical" and cfg.fmt == "json"

    def test_experiment_defaults(self):
        cfg = parse_config("estimator", environ={})
        assert cfg["theta"] == 0.0 and cfg["trials"] == 10000 and cfg["window"] == 2000

    @pytest.mark.parametrize("key,value", [("pa", "1.5"), ("pb", "-0.1"), ("eta", "0"), ("eta", "1"),
                                           ("runs", "0"), ("seed", "-1"), ("seed", str(2 ** 64)),
                                           ("mode", "nope"), ("trials", "2.5"), ("g", "2.5")])
    def test_range_errors(self, key, value):
        with pytest.raises(ConfigError) as exc:
            parse_config("bandit", {key: value}, environ={})
        assert str(exc.value).startswith(key)

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("bogus = 1\n")
        with pytest.raises(ConfigError, match="unknown"):
            parse_config("bandit", config_file=p, environ={})

    def test_precedence(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nseed = 5\ntheta = 0.2  # inline\nruns=3\n")
        cfg = parse_config("bandit", {"theta": "0.3"}, p, environ={"QTOW_SEED": "9"})
        assert cfg.seed == 5 and cfg["theta"] == 0.3 and cfg["runs"] == 3
        assert parse_config("bandit", environ={"QTOW_SEED": "9"}).seed == 9
        assert parse_config("bandit", {"seed": "1"}, environ={"QTOW_SEED": "9"}).seed == 1

    def test_underscore_keys(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("eta_mu = 0.2\nperp-policy = strict\n")
        cfg = parse_config("bandit", config_file=p, environ={})
        assert cfg["eta-mu"] == 0.2 and cfg["perp-policy"] == "strict"

    def test_bad_config_line(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed 5\n")
        with pytest.raises(ConfigError):
            read_config_file(p)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config("bandit", config_file=tmp_path / "nope", environ={})

    def test_format_inference(self):
        assert parse_config("bandit", {"out": "x.csv"}, environ={}).fmt == "csv"
        assert parse_config("bandit", {"out": "x.json"}, environ={}).fmt == "json"
        assert parse_config("bandit", {"out": "x.csv", "format": "json"}, environ={}).fmt == "json"

    def test_beta_grid(self):
        g = parse_beta_grid("beta-grid", "0:1.5708:0.1")
        assert len(beta_values(g)) == 16
        assert len(beta_values(parse_beta_grid("b", f"0:{math.pi / 2}:{math.pi / 32}"))) == 17
        for bad in ("0:1", "0:1:0", "1:0:0.1", "0:3:0.1", "a:b:c"):
            with pytest.raises(ConfigError):
                parse_beta_grid("beta-grid", bad)

    def test_states(self):
        assert np.allclose(resolve_state(parse_state("state", "perp")), [0, 0, 1])
        custom = parse_state("state", "custom 0.6,0,0.8")
        assert np.allclose(resolve_state(custom), [0.6, 0, 0.8])
        assert resolve_state("mixed").shape == (3, 3)
        with pytest.raises(ConfigError):
            parse_state("state", "custom 1,0,1")
        with pytest.raises(ConfigError):
            parse_state("state", "spooky")


class TestEmit:
    def test_empty_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        emit([], "csv", p, header=BANDIT_HEADER)
        assert p.read_text() == ",".join(BANDIT_HEADER) + "\n"

    def test_one_record(self, tmp_path):
        p = tmp_path / "o.csv"
        emit([(0, 0, "A", 1, 0.5, 1.0, 0.5, 0.1, 0.0)], "csv", p, header=BANDIT_HEADER)
        assert len(p.read_text().splitlines()) == 2

    def test_float_roundtrip(self):
        for x in (0.1, 1 / 3, math.pi, 1e-300, 2.0 ** 0.5):
            assert float(fmt_float(x)) == x

    def test_none_and_nonfinite(self):
        assert csv_text(("a", "b", "c"), [(None, math.nan, True)]) == "a,b,c\n,,true\n"
        assert json.loads(json_text({"x": math.inf, "y": None})) == {"x": None, "y": None}

    def test_json_roundtrip(self, tmp_path):
        doc = {"b": [1, 2.5, np.float64(0.1)], "a": {"n": np.int64(3), "s": "x"}}
        p = tmp_path / "d.json"
        emit(doc, "json", p)
        back = json.loads(p.read_text())
        assert back == {"b": [1, 2.5, 0.1], "a": {"n": 3, "s": "x"}}
        assert list(back) == ["b", "a"]

    def test_bad_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit([], "xml", tmp_path / "x")

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="cannot write"):
            emit([], "json", blocker / "sub" / "x.json")


class TestExperiments:
    def test_bandit_rows(self, tmp_path):
        out = tmp_path / "b.csv"
        cfg = parse_config("bandit", {**SMALL, "out": str(out)}, environ={})
        rs = run_experiment(cfg)
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(BANDIT_HEADER)
        assert len(lines) == 1 + 2 * 200
        meta = json.loads(open(sidecar_path(out)).read())
        assert meta["seed"] == 42 and meta["config"]["runs"] == 2 and "wall_clock_s" in meta
        assert meta["backend"] in ("numba", "python")
        assert rs.paths == [str(out), sidecar_path(out)]

    def test_summary_only(self):
        buf = io.StringIO()
        run_experiment(parse_config("bandit", {**SMALL, "summary-only": True}, environ={}), buf)
        doc = json.loads(buf.getvalue())
        assert "rows" not in doc and len(doc["summary"]["per_run"]) == 2
        assert doc["config"]["seed"] == 42

    def test_strict_policy_rows(self):
        buf = io.StringIO()
        run_experiment(parse_config("bandit", {**SMALL, "perp-policy": "strict", "mu0": "0.3",
                                               "estimator": "memory", "format": "csv"}, environ={}), buf)
        lines = buf.getvalue().splitlines()[1:]
        assert any(",," in line for line in lines)

    def test_estimator(self):
        buf = io.StringIO()
        run_experiment(parse_config("estimator", {**SMALL, "window": "100"}, environ={}), buf)
        doc = json.loads(buf.getvalue())
        assert doc["columns"] == ["run_id", "t", "reward", "g_hat", "mu", "p_bar"]
        assert all(r[5] == pytest.approx(0.5) for r in doc["rows"])

    def test_compare(self):
        buf = io.StringIO()
        run_experiment(parse_config("compare", SMALL, environ={}), buf)
        doc = json.loads(buf.getvalue())
        assert set(doc["summary"]) == {"qtow", "classical", "random"}
        assert len(doc["rows"]) == 6

    def test_kcbs(self):
        buf = io.StringIO()
        run_experiment(parse_config("kcbs", {"samples": "1000"}, environ={}), buf)
        s = json.loads(buf.getvalue())["summary"]
        assert s["sum"] == pytest.approx(math.sqrt(5), abs=1e-12)
        assert s["violated"] and s["noncontextual_max"] == 2

    def test_lemma_peak(self):
        buf = io.StringIO()
        run_experiment(parse_config("lemma-a1", {"samples": "2000"}, environ={}), buf)
        doc = json.loads(buf.getvalue())
        grid = np.array([p["beta"] for p in doc["summary"]["points"]])
        assert doc["summary"]["peak_beta"] == grid[np.argmin(np.abs(grid - math.pi / 4))]
        assert all(p["p_no_probe"] == 0.0 for p in doc["summary"]["points"])

    def test_lemma_mixed(self):
        buf = io.StringIO()
        run_experiment(parse_config("lemma-a1", {"state": "mixed", "format": "csv"}, environ={}), buf)
        first = buf.getvalue().splitlines()[1].split(",")
        assert first[3:] == ["", "", "", ""]


class TestDeterminism:
    def _text(self, tmp_path, name, **flags):
        out = tmp_path / name
        run_experiment(parse_config("bandit", {**SMALL, "seed": "7", "out": str(out), **flags},
                                    environ={}))
        meta = json.loads(open(sidecar_path(out)).read())
        meta.pop("wall_clock_s")
        meta["config"].pop("out")
        meta["config"].pop("workers")
        return out.read_bytes(), meta

    @pytest.mark.parametrize("ext", ["csv", "json"])
    def test_repeat_and_workers(self, tmp_path, ext):
        a = self._text(tmp_path, f"a.{ext}")
        b = self._text(tmp_path, f"b.{ext}")
        c = self._text(tmp_path, f"c.{ext}", workers="2")
        assert a == b == c

    def test_seed_changes_output(self, tmp_path):
        a, _ = self._text(tmp_path, "a.csv")
        out = tmp_path / "d.csv"
        run_experiment(parse_config("bandit", {**SMALL, "seed": "8", "out": str(out)}, environ={}))
        assert out.read_bytes() != a


class TestCli:
    def test_help(self):
        r = run_cli("--help")
        assert r.returncode == 0
        for name in ("kcbs", "lemma-a1", "bandit", "estimator", "compare"):
            assert name in r.stdout

    def test_bad_value_exit_code(self):
        r = run_cli("bandit", "--pa", "1.5")
        assert r.returncode == 2 and "pa" in r.stderr

    def test_unwritable_exit_code(self, tmp_path):
        (tmp_path / "f").write_text("")
        r = run_cli("kcbs", "--samples", "10", "--out", str(tmp_path / "f" / "x.json"))
        assert r.returncode == 1 and "cannot write" in r.stderr

    def test_each_subcommand(self, tmp_path):
        cases = [("kcbs", "--samples", "100"), ("lemma-a1", "--samples", "100"),
                 ("bandit", "--runs", "1", "--trials", "50"),
                 ("estimator", "--runs", "1", "--trials", "50", "--window", "10"),
                 ("compare", "--runs", "1", "--trials", "50")]
        for case in cases:
            out = tmp_path / f"{case[0]}.json"
            r = run_cli(*case, "--out", str(out))
            assert r.returncode == 0, r.stderr
            assert json.loads(out.read_text())["config"]["experiment"] == case[0]
            assert os.path.exists(sidecar_path(out))

    def test_custom_state_flag(self):
        assert cli.main(["kcbs", "--samples", "10", "--state", "custom", "1,0,0"]) == 0

    def test_env_seed(self):
        a = run_cli("kcbs", "--samples", "100", env={"QTOW_SEED": "3"}).stdout
        b = run_cli("kcbs", "--samples", "100", "--seed", "3").stdout
        assert a == b and '"seed": 3' in a
