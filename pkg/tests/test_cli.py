import json

import pytest

from hyperfuel.cli import build_parser, main

COMMANDS = ["run", "validate", "synth", "demosaic", "calibrate", "register", "index", "classify", "fuse",
            "accumulate"]


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_for_every_subcommand(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        main([cmd, "--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    assert "usage: hyperfuel " + cmd in out


def test_every_option_has_help_text():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        for action in p._actions:
            if action.dest != "help":
                assert action.help, f"{name} {action.option_strings} lacks help"


def test_synth_then_validate_and_run(tmp_path, capsys):
    assert main(["synth", "--scene", "checker", "--frames", "2", "--width", "40", "--height", "30",
                 "--out", str(tmp_path / "s")]) == 0
    man = str(tmp_path / "s" / "manifest.json")
    assert main(["validate", "--manifest", man]) == 0
    assert main(["run", "--manifest", man, "--out", str(tmp_path / "o"), "--report", str(tmp_path / "r.json")]) == 0
    reports = json.loads((tmp_path / "r.json").read_text())
    assert [r["stage"] for r in reports][0] == "demosaic" and "wall_time" in reports[0]


def test_exit_codes(tmp_path, small_session):
    # 3: manifest cannot be read at all
    assert main(["validate", "--manifest", str(tmp_path / "absent.json")]) == 3
    # 1: malformed manifest / validation findings / unknown stage
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["validate", "--manifest", str(tmp_path / "bad.json")]) == 1
    d = json.loads(small_session.read_text())
    d["poses"] = "gone.txt"
    (small_session.parent / "m_cli.json").write_text(json.dumps(d))
    assert main(["validate", "--manifest", str(small_session.parent / "m_cli.json")]) == 1
    assert main(["run", "--manifest", str(small_session.parent / "m_cli.json"), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--manifest", str(small_session), "--out", str(tmp_path / "o"), "--stages", "bogus"]) == 1
    # 2: a stage fails on well-formed input files
    s = small_session.parent
    assert main(["calibrate", "--cube", str(s / "frames" / "rgb_0000"), "--signals", str(s / "signals" / "swir.json"),
                 "--out", str(tmp_path / "x")]) == 2
