import json
import subprocess
import sys

import pytest

from legtrack.cli import main
from legtrack.streamio import read_marker_stream


@pytest.fixture
def session(tmp_path):
    paths = {k: tmp_path / n for k, n in (("stream", "s.csv"), ("config", "c.json"), ("truth", "t.csv"))}
    code = main([
        "simulate", "--duration", "1", "--rate", "20", "--seed", "3", "--noise-sigma-mm", "0.03",
        "--landmark-sigma-mm", "0.3", "--occlusion-prob", "0.05",
        "-o", str(paths["stream"]), "--config-out", str(paths["config"]), "--truth", str(paths["truth"]),
    ])
    assert code == 0
    return paths


def test_simulate_outputs(session):
    stream = read_marker_stream(session["stream"])
    assert len(stream) == 20 and len(stream.labels) == 12
    assert session["truth"].read_text().startswith("time_s,hip_flexion")
    assert json.loads(session["config"].read_text())["version"] == 1


def test_simulate_is_seed_deterministic(tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        main(["simulate", "--duration", "0.5", "--rate", "20", "--seed", "9", "--noise-sigma-mm", "0.03", "-o", str(tmp_path / name)])
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("command", ["track", "angles", "consistency"])
def test_report_commands(session, tmp_path, command):
    out = tmp_path / f"{command}.json"
    args = [command, "--config", str(session["config"]), "--input", str(session["stream"]), "--output", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    report = json.loads(first)
    assert len(report["rows"]) == 20
    assert main(args) == 0 and out.read_bytes() == first


def test_validate(session, capsys):
    assert main(["validate", "--config", str(session["config"])]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_errors_are_machine_readable(session, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1}))
    assert main(["validate", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "bodies" in err["message"]

    stream = tmp_path / "rev.csv"
    stream.write_text("time_s,body,label,x_mm,y_mm,z_mm,visible\n1,femur,H,0,0,0,1\n0,femur,H,0,0,0,1\n")
    assert main(["angles", "-c", str(session["config"]), "-i", str(stream)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NonMonotonicTime" and "line 3" in err["message"]

    assert main(["angles", "-c", str(session["config"]), "-i", str(tmp_path / "missing.csv")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"


def test_console_script(session):
    proc = subprocess.run(
        [sys.executable, "-m", "legtrack.cli", "consistency", "-c", str(session["config"]), "-i", str(session["stream"])],
        capture_output=True, text=True, check=True,
    )
    summary = json.loads(proc.stdout)["summary"]["E:tibia|cross_joint"]
    assert summary["count"] > 0 and 0.0 < summary["mean"] < 2.0
