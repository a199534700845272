from pathlib import Path

import pytest

from stokespec import ConfigError, ExperimentConfig, InputError, config_template, load_config, parse_config
from stokespec._utils import from_text, to_text

SAMPLE = """
[run]
seed = 7
out = results

[surface]
kind = star
harmonics = 2, 0, 0.1

[sweep]
eps = 0.1, 0.05, 0.025
r0bar = 0.5
psi = 0.0, 1.0
flat = no

[resonance]
spectrum = 1, 2, 3
complexity = 5
"""


def test_sample():
    config = parse_config(SAMPLE)
    assert config.seed == 7
    assert config.out == Path("results")
    assert config.surface.kind == "star"
    assert config.surface.harmonic_map() == {(2, 0): 0.1}
    assert config.sweep.eps == [0.1, 0.05, 0.025]
    assert config.sweep.psi == (0.0, 1.0)
    assert config.sweep.flat is False
    assert config.resonance.spectrum == [1.0, 2.0, 3.0]
    assert config.resonance.complexity == 5
    # untouched sections keep their defaults
    assert config.eigs == ExperimentConfig().eigs


def test_template_round_trip():
    config = parse_config(SAMPLE)
    assert parse_config(config_template(config)) == config
    assert parse_config(config_template()) == ExperimentConfig()


@pytest.mark.parametrize(
    "text",
    [
        "[nowhere]\nx = 1\n",
        "[sweep]\nwidth = 0.1\n",
        "[run]\ncolour = red\n",
        "[sweep]\neps = 0.1, 0.2\n",
        "[sweep]\neps = 0.1, -0.05\n",
        "[sweep]\nr0bar = 1.5\n",
        "[sweep]\ndelta = 0\n",
        "[tolerances]\nspecfun = 0\n",
        "[surface]\nharmonics = 2, 0\n",
        "[surface]\nkind = torus\n",
        "[sweep\neps = 0.1\n",
    ],
)
def test_invalid_configurations(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_error_is_an_input_error():
    assert issubclass(ConfigError, InputError)


def test_load_config(tmp_path):
    path = tmp_path / "experiment.cfg"
    path.write_text(SAMPLE, encoding="utf-8")
    assert load_config(path).seed == 7

    empty = tmp_path / "empty.cfg"
    empty.write_text("\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(empty)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


@pytest.mark.parametrize(
    "spec, text, value",
    [
        (float, "0.25", 0.25),
        (int, "12", 12),
        (bool, "yes", True),
        (bool, "0", False),
        ([float], "1, 2.5,", [1.0, 2.5]),
        ((int,), "24, 48", (24, 48)),
        (Path, "out/dir", Path("out/dir")),
    ],
)
def test_text_conversion(spec, text, value):
    assert from_text(spec, text) == value


def test_to_text():
    assert to_text(0.1) == "0.1"
    assert to_text(True) == "1"
    assert to_text((24, 48)) == "24,48"
    assert to_text(None) == ""
