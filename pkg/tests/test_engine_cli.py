import json

import numpy as np
import pytest

from owf_emt import DATA_DIR
from owf_emt.cli import main
from owf_emt.engine import run_simulation
from owf_emt.recording import read_csv
from owf_emt.scenario import ScenarioError, parse_scenario

SHORT = f"""
[SCENARIO]
name = short
case = {DATA_DIR / "nine_bus.case"}
dt = 50e-6
t_end = 0.05
record_every = 10
channels = bus5.V, G1.speed
"""


@pytest.fixture
def short_file(tmp_path):
    path = tmp_path / "short.scn"
    path.write_text(SHORT)
    return path


def test_zero_length_run_keeps_metadata():
    sc = parse_scenario(SHORT.replace("t_end = 0.05", "t_end = 0"))
    rec = run_simulation(sc)
    assert len(rec) == 0
    assert rec.metadata["case"] == "nine_bus.case"
    assert len(rec.metadata["case_sha256"]) == 16


def test_short_run_samples_and_steady_values():
    rec = run_simulation(parse_scenario(SHORT))
    t = rec.array("time")
    assert len(t) == 101
    assert np.allclose(np.diff(t), 5e-4)
    assert abs(rec.array("G1.speed") - 1.0).max() < 1e-4
    assert rec.array("bus5.V").min() > 0.9


def test_unknown_channel():
    with pytest.raises(ScenarioError):
        run_simulation(parse_scenario(SHORT.replace("G1.speed", "G1.warp")))


def test_cli_run_writes_outputs(short_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(short_file), "--out", str(out), "--t-end", "0.02"]) == 0
    paths = json.loads(capsys.readouterr().out)
    cols = read_csv(paths["csv"])
    assert list(cols) == ["time", "bus5.V", "G1.speed"]
    assert cols["time"][-1] == pytest.approx(0.02)
    assert "BEGIN INIT SNAPSHOT" in (out / "short.log").read_text()


def test_cli_channels_option(short_file, tmp_path, capsys):
    argv = ["run", str(short_file), "--out", str(tmp_path), "--t-end", "0.01", "--channels", "bus1.V"]
    assert main(argv) == 0
    cols = read_csv(json.loads(capsys.readouterr().out)["csv"])
    assert list(cols) == ["time", "bus1.V"]


def test_cli_validate_and_powerflow(capsys):
    assert main(["validate", str(DATA_DIR / "nine_bus.case")]) == 0
    assert json.loads(capsys.readouterr().out) == {"ok": True, "violations": []}
    assert main(["powerflow", str(DATA_DIR / "nine_bus.case")]) == 0
    assert capsys.readouterr().out.startswith("BEGIN INIT SNAPSHOT")


def test_cli_missing_file_is_json_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "none.case")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"


def test_cli_bad_case_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.case"
    bad.write_text("[SYSTEM]\nmva_base 100\n[BUS]\n1 230 nowhere 1 1.0\n")
    assert main(["powerflow", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "CaseError" and err["line"] == 4


def test_cli_bad_channel_is_input_error(short_file, tmp_path, capsys):
    assert main(["run", str(short_file), "--out", str(tmp_path), "--channels", "bus99.V"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ScenarioError"
