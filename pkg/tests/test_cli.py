import csv
import json
import subprocess
import sys

import pytest

from smallloss.cli import CSV_HEADER, ConfigError, main, parse_config


def _config(**over):
    cfg = {
        "algorithm": {"name": "blackbox", "eps": 0.4, "delta": 0.05, "alpha_guess": 2},
        "instance": {"kind": "cliques", "num_cliques": 2, "clique_size": 3, "mu_star": 0.1, "mu_rest": 0.6},
        "T": 2000,
        "seeds": [1, 2, 3, 4],
        "assertions": "on",
    }
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k] = {**cfg[k], **v}
        else:
            cfg[k] = v
    return cfg


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_writes_csv_and_summary(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", _write(tmp_path, _config()), "--out", str(out)]) == 0
    with open(out / "run_1.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 2001
    summary = json.loads((out / "summary.json").read_text())
    for key in ("algo", "instance", "T", "seeds", "mean_regret", "std_regret", "mean_lstar", "phases", "violations"):
        assert key in summary
    assert summary["violations"] == 0


def test_byte_identical_reruns(tmp_path):
    cfg = _write(tmp_path, _config(algorithm={"eps": None, "adapt_alpha": True}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b)]) == 0
    for s in (1, 2, 3, 4):
        assert (a / f"run_{s}.csv").read_bytes() == (b / f"run_{s}.csv").read_bytes()


def test_parallel_matches_serial(tmp_path):
    cfg = _write(tmp_path, _config(seeds=list(range(20)), T=500))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--parallel", "4"]) == 0
    for s in range(20):
        assert (a / f"run_{s}.csv").read_bytes() == (b / f"run_{s}.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_corrupted_threshold_exits_nonzero(tmp_path):
    cfg = _write(tmp_path, _config(algorithm={"audit_floor_scale": 1e6}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_assert_flag_without_config_assertions(tmp_path):
    cfg = _write(tmp_path, _config(assertions="off", algorithm={"audit_floor_scale": 1e6}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--assert"]) == 2


@pytest.mark.parametrize("bad", [
    {"algorithm": {"eps": 1.5}},
    {"algorithm": {"delta": 0}},
    {"T": 0},
    {"seeds": []},
    {"algorithm": {"name": "nope"}},
    {"instance": {"kind": "torus"}},
    {"algorithm": {"name": "green_ix_graph"}},
    {"algorithm": {"name": "semibandit"}},
])
def test_config_errors_exit_1(tmp_path, bad):
    assert main(["run", "--config", _write(tmp_path, _config(**bad))]) == 1


def test_missing_eps_is_error():
    cfg = _config()
    del cfg["algorithm"]["eps"]
    with pytest.raises(ConfigError):
        parse_config(cfg)


def test_unreadable_and_invalid(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 1


def test_sweep_report(tmp_path):
    cfg = _write(tmp_path, _config(algorithm={"eps": None}, seeds=[1, 2]))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--param", "mu_star", "--values", "0.02,0.05,0.1,0.2,0.3",
                 "--out", str(out)]) == 0
    report = json.loads((out / "sweep_mu_star.json").read_text())
    assert len(report["rows"]) == 5 and report["fitted_exponent"] is not None


def test_sweep_d_with_fixed_cliques(tmp_path):
    cfg = _write(tmp_path, _config(seeds=[1], T=300))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--param", "d", "--values", "4,6,8", "--out", str(out)]) == 0
    report = json.loads((out / "sweep_d.json").read_text())
    assert [r["value"] for r in report["rows"]] == [4, 6, 8]


def test_empty_sweep_errors(tmp_path):
    assert main(["sweep", "--config", _write(tmp_path, _config()), "--param", "mu_star", "--values", ""]) == 1


def test_check_command(capsys):
    assert main(["check", "--suite", "freezing", "--trials", "200", "--seed", "0"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["violations"] == 0 and report["trials"] == 200


def test_unknown_suite_exits_1():
    with pytest.raises(SystemExit) as e:
        main(["check", "--suite", "bogus", "--trials", "1", "--seed", "0"])
    assert e.value.code == 1


def test_semibandit_and_shifting_runs(tmp_path):
    sb = _config(algorithm={"name": "semibandit", "eps": 0.5},
                 instance={"kind": "layered_paths", "layers": 2, "width": 2, "mu_star": 0.1, "mu_rest": 0.5},
                 T=100, seeds=[0])
    assert main(["run", "--config", _write(tmp_path, sb, "sb.json"), "--out", str(tmp_path / "sb")]) == 0
    sh = _config(algorithm={"eps": 0.25, "noise": 0.001, "engine": "noisy_hedge"},
                 instance={"kind": "shifting", "d": 3, "K": 2, "mu_star": 0.1, "mu_rest": 0.9}, T=500, seeds=[0])
    assert main(["run", "--config", _write(tmp_path, sh, "sh.json"), "--out", str(tmp_path / "sh")]) == 0
    summary = json.loads((tmp_path / "sh" / "summary.json").read_text())
    assert "mean_shifting_apx_regret" in summary


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "smallloss.cli", "check", "--suite", "graph-tools",
                          "--trials", "20", "--seed", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["passed"]
