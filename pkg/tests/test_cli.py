import json

import pytest

from stokespec import parse_config
from stokespec.cli import main


def test_no_subcommand(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_option():
    assert main(["resonance", "--colour", "red"]) == 2


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "shape-derivative" in capsys.readouterr().out


def test_config_template(capsys):
    assert main(["config-template", "--seed", "11"]) == 0
    config = parse_config(capsys.readouterr().out)
    assert config.seed == 11


def test_dry_run(capsys, tmp_path):
    assert main(["eigs", "--dry-run", "--out", str(tmp_path / "never")]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["subcommand"] == "eigs"
    assert plan["config"]["out"].endswith("never")
    assert not (tmp_path / "never").exists()


def test_invalid_configuration(capsys, tmp_path):
    empty = tmp_path / "empty.cfg"
    empty.write_text("", encoding="utf-8")
    assert main(["resonance", "--config", str(empty)]) == 2
    assert "[error]" in capsys.readouterr().err
    assert main(["resonance", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_resonance(capsys, tmp_path):
    config = tmp_path / "resonance.cfg"
    config.write_text("[resonance]\nspectrum = 1, 2, 3\ncomplexity = 5\n", encoding="utf-8")
    assert main(["resonance", "--config", str(config), "--out", str(tmp_path)]) == 0
    assert "[resonance] OK" in capsys.readouterr().out
    result = json.loads((tmp_path / "resonance.json").read_text(encoding="utf-8"))
    assert result["complexity"] == 5
    assert [r["k"] for r in result["relations"]] == [2, 3]


def test_resonance_guard(capsys, tmp_path):
    config = tmp_path / "resonance.cfg"
    config.write_text("[resonance]\nspectrum = 1, 2, 3\ncomplexity = 40\n", encoding="utf-8")
    assert main(["resonance", "--config", str(config), "--out", str(tmp_path)]) == 1
    assert "exceeds" in capsys.readouterr().err


def test_specfun(tmp_path):
    assert main(["specfun", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "specfun.csv").read_bytes().decode("utf-8").split("\n")
    assert lines[0].startswith("schema_v1,")
    rows = [line for line in lines[1:] if line]
    assert rows and all(row.startswith("1,") for row in rows)
    assert "\r" not in "".join(lines)
    report = json.loads((tmp_path / "specfun.json").read_text(encoding="utf-8"))
    assert report


@pytest.mark.slow
def test_kernels_check(tmp_path):
    assert main(["kernels-check", "--out", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / "kernels.csv").exists()
