import json

import pytest

from app.cli import pipeline
from app.cli.deps import snapshot_dir
from app.core import artifacts
from app.core.config import validate_run_config
from app.db.session import recent_runs
from app.main import main


def _config(tmp_path, body: str):
    path = tmp_path / "run.toml"
    path.write_text(body)
    return path


def _run(tmp_path, command, body):
    out_dir = tmp_path / "out"
    code = main([command, "--config", str(_config(tmp_path, body)), "--out-dir", str(out_dir)])
    return code, out_dir


def _error_body(stderr: str) -> dict:
    return json.loads(next(line for line in stderr.splitlines() if line.startswith("{")))


def test_profile_writes_table_and_sidecar(tmp_path):
    code, out_dir = _run(tmp_path, "profile", "[profile]\nomega = 0.8\nn = 512\n")
    assert code == 0
    columns, data = artifacts.read_csv(out_dir / "profile.csv")
    assert columns == ["r", "f", "g", "f_e", "alpha"]
    assert data.shape == (512, 5)
    sidecar = artifacts.read_json(out_dir / "profile.json")
    assert sidecar["stable"] is False
    assert sidecar["expected_decay"] == pytest.approx(0.6)
    assert (out_dir / artifacts.FROZEN_CONFIG).exists()
    assert recent_runs(limit=1)[0].command == "profile"


def test_unknown_key_exits_with_config_error(tmp_path, capsys):
    code, _ = _run(tmp_path, "profile", "[profile]\nomega = 0.8\nomgea = 0.7\n")
    assert code == 1
    body = _error_body(capsys.readouterr().err)
    assert body["error"] == "ConfigError"
    assert body["detail"]["invalid_config"][0]["key"] == "profile.omgea"


def test_frequency_above_mass_exits_with_physics_error(tmp_path, capsys):
    code, _ = _run(tmp_path, "profile", "[profile]\nomega = 1.2\n")
    assert code == 2
    body = _error_body(capsys.readouterr().err)
    assert body["error"] == "DomainError"
    latest = recent_runs(limit=1)[0]
    assert latest.exit_code == 2
    assert latest.status == "failed"


def test_check_hypotheses_writes_report(tmp_path):
    code, out_dir = _run(tmp_path, "check-hypotheses", "[profile]\nomega = 0.8\n")
    assert code == 0
    report = artifacts.read_json(out_dir / "hypotheses.json")
    assert report["hypotheses"]["checks"]["exist3"]["status"] == "pass"


FIELD_RUN = """
[profile]
omega = 0.5
e = 0.05

[external]
preset = "uniform-E"
amplitude = 1.0

[grid]
n = 32
L = 24.0

[evolve]
dt = 0.1875
t_end = 0.75
monitor_stride = 2
snapshot_stride = 2
require_stable = false
box_tail_tol = 1e-3

[compare]
dt = 0.0625
"""


def test_boost_spectrum_evolve_track_compare(tmp_path):
    for command in ("boost", "spectrum", "evolve", "track", "compare"):
        code, out_dir = _run(tmp_path, command, FIELD_RUN)
        assert code == 0, command
    assert artifacts.read_json(out_dir / "boost.json")["tail_ratio"] < 1e-3
    assert artifacts.read_json(out_dir / "spectrum.json")["spectrum"]["stable"] is False
    assert [p.name for p in artifacts.snapshot_files(out_dir / "snapshots")] == [
        "snap_000000.kgm",
        "snap_000002.kgm",
        "snap_000004.kgm",
    ]
    columns, monitors = artifacts.read_csv(out_dir / "monitor.csv")
    assert monitors[-1, columns.index("t")] == pytest.approx(0.75)
    tracked = artifacts.read_json(out_dir / "track.json")
    assert tracked["times"] == pytest.approx([0.0, 0.375, 0.75])
    comparison = artifacts.read_json(out_dir / "comparison.json")
    assert comparison["samples"] == 3
    assert comparison["max_xi"] < 0.05
    assert (out_dir / "effective.csv").exists()
    assert [r.command for r in recent_runs(limit=5)] == ["compare", "track", "evolve", "spectrum", "boost"]


def test_pipeline_stages_get_their_own_paths(tmp_path):
    config = validate_run_config(
        {
            "profile": {"omega": 0.5, "e": 0.1},
            "track": {"snapshot_dir": str(tmp_path / "snaps")},
            "compare": {"track_path": str(tmp_path / "track.json")},
        }
    )
    stages = [pipeline._at_coupling(config, e) for e in (0.1, 0.05)]
    assert [s.track.snapshot_dir for s in stages] == [str(tmp_path / "snaps" / "e_0.1"), str(tmp_path / "snaps" / "e_0.05")]
    assert all(s.compare.track_path is None for s in stages)
    assert [snapshot_dir(s, tmp_path / "out") for s in stages] == [tmp_path / "snaps" / "e_0.1", tmp_path / "snaps" / "e_0.05"]
    assert [s.profile.e for s in stages] == [0.1, 0.05]


@pytest.mark.slow
def test_pipeline_builds_convergence_table(tmp_path):
    body = FIELD_RUN.replace("t_end = 0.75", "t_end = 3.0").replace("snapshot_stride = 2", "snapshot_stride = 4")
    body += f'\nhalvings = 1\n\n[track]\nsnapshot_dir = "{tmp_path / "snaps"}"\n'
    code, out_dir = _run(tmp_path, "pipeline", body)
    assert code == 0
    for stage in ("e_0.05", "e_0.025"):
        assert (out_dir / stage / "effective.csv").exists()
        assert (out_dir / stage / "track.json").exists()
        assert artifacts.snapshot_files(tmp_path / "snaps" / stage)
    report = artifacts.read_json(out_dir / "pipeline.json")
    rows = report["convergence"]
    assert [row["e"] for row in rows] == [0.05, 0.025]
    assert all(row["max_xi"] < 0.1 for row in rows)
    assert rows[1]["ratio_to_previous"] is not None
