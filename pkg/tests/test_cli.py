import json

import pytest

from torqueflow.cli import main
from torqueflow.study import calibrated_study_path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_simulate_writes_artifacts_and_echoes_config(tmp_path, capsys):
    out = tmp_path / "runs"
    code, stdout, _ = run_cli(
        capsys, "simulate", "--method", "ar", "--n", "2", "--seed", "7",
        "--out", str(out), "--max-s", "120")
    assert code == 0
    assert stdout.startswith("config:")
    echoed = json.loads(stdout.splitlines()[0].split("config: ", 1)[1])
    assert echoed["seed"] == 7
    session_dirs = sorted(p for p in out.iterdir() if p.is_dir())
    assert len(session_dirs) == 2
    for d in session_dirs:
        assert (d / "events.jsonl").exists()
        assert (d / "report.csv").exists()
        assert (d / "guidance.jsonl").exists()
    assert "validated=10/10" in stdout


def test_simulate_rejects_zero_sessions(tmp_path, capsys):
    code, _, err = run_cli(capsys, "simulate", "--n", "0", "--out", str(tmp_path))
    assert code == 2
    assert "--n" in err


def test_simulate_rejects_unknown_scenario(tmp_path, capsys):
    code, _, err = run_cli(capsys, "simulate", "--scenario", "nope",
                           "--out", str(tmp_path))
    assert code == 2
    assert "unknown scenario" in err


def test_simulate_parallel_jobs_match_serial(tmp_path, capsys):
    out_a = tmp_path / "serial"
    out_b = tmp_path / "parallel"
    assert run_cli(capsys, "simulate", "--n", "3", "--seed", "5",
                   "--out", str(out_a))[0] == 0
    assert run_cli(capsys, "simulate", "--n", "3", "--seed", "5",
                   "--jobs", "3", "--out", str(out_b))[0] == 0
    for d in sorted(p.name for p in out_a.iterdir()):
        assert (out_a / d / "events.jsonl").read_bytes() == \
            (out_b / d / "events.jsonl").read_bytes()


def test_replay_verifies_simulated_log(tmp_path, capsys):
    out = tmp_path / "runs"
    run_cli(capsys, "simulate", "--n", "1", "--seed", "3", "--out", str(out))
    log = next(out.iterdir()) / "events.jsonl"
    code, stdout, _ = run_cli(capsys, "replay", str(log))
    assert code == 0
    assert "deterministic: OK" in stdout


def test_replay_detects_corruption_with_line_number(tmp_path, capsys):
    out = tmp_path / "runs"
    run_cli(capsys, "simulate", "--n", "1", "--seed", "3", "--out", str(out))
    log = next(out.iterdir()) / "events.jsonl"
    lines = log.read_bytes().splitlines(keepends=True)
    lines[4] = b"{broken json\n"
    log.write_bytes(b"".join(lines))
    code, _, err = run_cli(capsys, "replay", str(log))
    assert code == 3
    assert "line 5" in err


def test_replay_detects_guidance_mismatch(tmp_path, capsys):
    out = tmp_path / "runs"
    run_cli(capsys, "simulate", "--n", "1", "--seed", "3", "--out", str(out))
    d = next(out.iterdir())
    (d / "guidance.jsonl").write_bytes(b'{"op":"arrow","tampered":true}\n')
    code, _, err = run_cli(capsys, "replay", str(d / "events.jsonl"))
    assert code == 3
    assert "MISMATCH" in err


def test_score_bundled_fixture(tmp_path, capsys):
    code, stdout, _ = run_cli(capsys, "score", str(calibrated_study_path()),
                              "--out", str(tmp_path))
    assert code == 0
    assert "execution_time_s,623,339" in stdout
    assert "n_with_errors,23,0" in stdout
    table = (tmp_path / "table1.csv").read_text()
    assert table.splitlines()[0] == "metric,conventional,ar_guided"
    radar = json.loads((tmp_path / "radar.json").read_text())
    assert radar["ar_guided"]["reliability"] == 100.0
    assert round(radar["conventional"]["reliability"], 1) == 32.4


def test_score_empty_dir_fails(tmp_path, capsys):
    code, _, err = run_cli(capsys, "score", str(tmp_path))
    assert code == 3
    assert "no session directories" in err


def test_score_simulated_bundle_without_questionnaires(tmp_path, capsys):
    out = tmp_path / "runs"
    run_cli(capsys, "simulate", "--n", "2", "--seed", "1", "--out", str(out))
    code, stdout, _ = run_cli(capsys, "score", str(out))
    assert code == 0
    assert "usability_sus,-" in stdout  # no questionnaires in a simulate bundle


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--method", "bogus"])
    assert exc.value.code == 2


def test_documented_examples_end_to_end(tmp_path, capsys):
    """The headline flows: guided runs stay clean, calibrated conventional
    runs err at roughly the observed rate."""
    out_ar = tmp_path / "ar"
    code, stdout, _ = run_cli(
        capsys, "simulate", "--method", "ar", "--n", "6", "--seed", "7",
        "--out", str(out_ar))
    assert code == 0
    assert "0 with errors" in stdout
    out_conv = tmp_path / "conv"
    code, stdout, _ = run_cli(
        capsys, "simulate", "--method", "conventional", "--profile",
        "paper-rates", "--n", "12", "--seed", "7", "--out", str(out_conv))
    assert code == 0
    n_err = int(stdout.rsplit("aborted, ", 1)[1].split(" with errors")[0])
    assert 3 <= n_err <= 11  # ~66% of 12, with slack


def test_env_port_override(monkeypatch):
    from torqueflow.cli import build_parser
    monkeypatch.setenv("TORQUEFLOW_PORT", "7500,8200")
    args = build_parser().parse_args(["serve"])
    assert args.wrench_port == 7500
    assert args.console_port == 8200
    monkeypatch.setenv("TORQUEFLOW_PORT", "7600")
    args = build_parser().parse_args(["serve"])
    assert args.wrench_port == 7600
    assert args.console_port == 8080


def test_profile_json_fragment(tmp_path, capsys):
    profile = tmp_path / "careful.json"
    profile.write_text(json.dumps({"p_wrong_order": 0.0, "p_wrong_screw": 0.0,
                                   "p_stale_torque": 0.0, "motion_speed": 300.0}))
    code, stdout, _ = run_cli(
        capsys, "simulate", "--method", "conventional", "--profile", str(profile),
        "--n", "1", "--seed", "1", "--out", str(tmp_path / "out"))
    assert code == 0
    assert "errors=none" in stdout


def test_score_plot_emission(tmp_path, capsys):
    code, stdout, _ = run_cli(capsys, "score", str(calibrated_study_path()),
                              "--out", str(tmp_path), "--plot")
    assert code == 0
    png = tmp_path / "radar.png"
    assert png.exists() and png.stat().st_size > 1000
