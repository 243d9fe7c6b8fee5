import json

import pytest

from difftherm.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, load_config, main, parse_kij

FEED = "0.25,0.25,0.25,0.25"

CONFIG = """
output_dir = "out"
[scenario.sw]
kind = "sweep"
P_bar = 18.0
fd_steps_T = [1.0, 1e-4, 1e-8]
fd_steps_P_pa = [10.0]
[scenario.cv]
kind = "curve"
T_grid = [240.0, 250.0]
P_grid_bar = []
"""


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(CONFIG)
    return p


def test_pt_flash(capsys):
    code, out, _ = run(capsys, "flash", "pt", "--feed", FEED, "--pressure-bar", "18", "--temperature-k", "250")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["phase"] == "two-phase"
    assert doc["components"] == ["methane", "ethylene", "ethane", "propane"]


def test_pv_flash_fd(capsys):
    code, out, _ = run(capsys, "flash", "pv", "--feed", FEED, "--pressure-bar", "18",
                       "--vapor-fraction", "0.7", "--mode", "fd", "--fd-step", "1e-6")
    assert code == EXIT_OK and json.loads(out)["mode"] == "fd:1e-06"


def test_ph_flash_from_feed_temperature(capsys):
    code, out, _ = run(capsys, "flash", "ph", "--feed", FEED, "--pressure-bar", "18",
                       "--feed-temperature-k", "250", "--duty", "2000")
    doc = json.loads(out)
    assert code == EXIT_OK and 250 < doc["T"] < 270


def test_not_converged_exit(capsys):
    code, out, _ = run(capsys, "flash", "pt", "--feed", FEED, "--pressure-bar", "18",
                       "--temperature-k", "250", "--max-outer", "2")
    assert code == EXIT_NOT_CONVERGED and json.loads(out)["converged"] is False


def test_feed_sum_needs_normalize(capsys):
    args = ["flash", "pt", "--feed", "0.2,0.2,0.2,0.3", "--pressure-bar", "18", "--temperature-k", "250"]
    code, _, err = run(capsys, *args)
    assert code == EXIT_ERROR and "--normalize" in err
    code, out, _ = run(capsys, *args, "--normalize")
    assert code == EXIT_OK and json.loads(out)["converged"]


@pytest.mark.parametrize("extra", [
    ["--feed", "0.5,0.5"],
    ["--feed", "a,b,c,d"],
    ["--feed=-0.5,0.5,0.5,0.5"],
])
def test_bad_feed(capsys, extra):
    code, _, err = run(capsys, "flash", "pt", *extra, "--pressure-bar", "18", "--temperature-k", "250")
    assert code == EXIT_ERROR and err.startswith("error:")


def test_fd_step_rules(capsys):
    base = ["flash", "pt", "--feed", FEED, "--pressure-bar", "18", "--temperature-k", "250"]
    assert run(capsys, *base, "--mode", "fd")[0] == EXIT_ERROR
    assert run(capsys, *base, "--fd-step", "1e-3")[0] == EXIT_ERROR


def test_usage_error_is_not_exit_2(capsys):
    assert run(capsys, "flash", "pt", "--pressure-bar", "18")[0] == EXIT_ERROR


def test_missing_spec_field(capsys):
    assert run(capsys, "flash", "pv", "--feed", FEED, "--pressure-bar", "18")[0] == EXIT_ERROR


def test_kij(capsys):
    assert parse_kij("methane:ethane=0.02", ["methane", "ethane"]).k[0][1] == 0.02
    base = ["flash", "pt", "--feed", FEED, "--pressure-bar", "18", "--temperature-k", "250"]
    assert run(capsys, *base, "--kij", "methane:propane=0.03")[0] == EXIT_OK
    assert run(capsys, *base, "--kij", "xenon:propane=0.03")[0] == EXIT_ERROR


def test_missing_config_writes_nothing(capsys, tmp_path):
    out = tmp_path / "never"
    code, _, err = run(capsys, "experiment", "--config", str(tmp_path / "nope.toml"),
                       "--scenario", "sw", "--output-dir", str(out))
    assert code == EXIT_ERROR and "not found" in err
    assert not out.exists()


def test_unknown_scenario(capsys, cfg):
    code, _, err = run(capsys, "experiment", "--config", str(cfg), "--scenario", "zz")
    assert code == EXIT_ERROR and "sw" in err
    assert not (cfg.parent / "out").exists()


def test_experiment_writes_and_reruns_identically(capsys, cfg):
    code, out, _ = run(capsys, "experiment", "--config", str(cfg), "--scenario", "sw")
    assert code == EXIT_OK and "sw (sweep)" in out
    d = cfg.parent / "out"
    first = {p.name: p.read_bytes() for p in d.iterdir()}
    assert set(first) == {"sw.sweep.csv", "sw.summary.json"}
    assert run(capsys, "experiment", "--config", str(cfg), "--scenario", "sw")[0] == EXIT_OK
    assert {p.name: p.read_bytes() for p in d.iterdir()} == first


def test_output_dir_override(capsys, cfg, tmp_path):
    target = tmp_path / "a" / "b"
    assert run(capsys, "experiment", "--config", str(cfg), "--scenario", "cv", "--output-dir", str(target))[0] == 0
    assert (target / "cv.curve.csv").is_file()


def test_config_relative_paths(cfg):
    c = load_config(cfg)
    assert c.output_dir == cfg.parent / "out"
    assert set(c.scenarios) == {"sw", "cv"}


def test_bad_scenario_table(capsys, tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('[scenario.x]\nkind = "curve"\nwhatever = 1\n')
    code, _, err = run(capsys, "experiment", "--config", str(p), "--scenario", "x")
    assert code == EXIT_ERROR and "whatever" in err


def test_shipped_config_parses():
    from pathlib import Path

    c = load_config(Path(__file__).parents[1] / "configs" / "reference.toml")
    assert set(c.scenarios) == {"dk-curves", "step-sweep", "distribution", "iterations"}
