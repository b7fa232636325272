import json

import pytest
import yaml

from roial.cli import main

from conftest import small_config


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(small_config().to_dict()))
    return path


def test_run_session_twice_identical_transcripts(config_path, tmp_path, capsys):
    assert main(["run-session", "--simulated", "--config", str(config_path), "--seed", "7"]) == 0
    first = capsys.readouterr().out
    assert main(["run-session", "--simulated", "--config", str(config_path), "--seed", "7"]) == 0
    second = capsys.readouterr().out
    assert first == second
    assert "trial   1" in first


def test_run_session_writes_outputs(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main([
        "run-session", "--simulated", "--config", str(config_path), "--out", str(out),
    ]) == 0
    capsys.readouterr()
    assert (out / "session.json").exists()
    assert (out / "ordinals.csv").exists()


def test_export_subcommand_round_trip(config_path, tmp_path, capsys):
    out = tmp_path / "sess"
    main(["run-session", "--simulated", "--config", str(config_path), "--out", str(out)])
    capsys.readouterr()
    exported = tmp_path / "exported"
    assert main(["export", "--snapshot", str(out / "session.json"), "--out", str(exported)]) == 0
    capsys.readouterr()
    assert (exported / "ordinals.csv").read_bytes() == (out / "ordinals.csv").read_bytes()
    assert (exported / "posterior_grid.csv").read_bytes() == (out / "posterior_grid.csv").read_bytes()


def test_run_study_writes_results(tmp_path, capsys):
    rc = main([
        "run-study", "--study", "noise", "--out", str(tmp_path), "--reduced",
        "--trials", "10", "--seeds", "2",
    ])
    out = capsys.readouterr().out
    assert rc == 0
    lines = [l for l in out.splitlines() if l.startswith("wrote ")]
    csv_path = lines[0].split(" ", 1)[1]
    assert csv_path.endswith(".csv")
    header = open(csv_path).readline().strip()
    assert header == "study,arm,seed,iteration,metric,value"


def test_unknown_flag_rejected(config_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run-session", "--simulated", "--config", str(config_path), "--bogus"])
    assert exc.value.code == 2


def test_errors_are_structured(tmp_path, capsys):
    rc = main(["export", "--snapshot", str(tmp_path / "missing.json"), "--out", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err.strip()
    payload = json.loads(err)
    assert "error" in payload and "detail" in payload


def test_bad_config_lists_field_paths(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"dims": [], "ordinal": {"categories": ["x"]}}))
    rc = main(["run-session", "--simulated", "--config", str(path)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "dims" in err
    assert "ordinal.categories" in err
