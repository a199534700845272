from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ._constants import (
    CLUSTER_RTOL_ANALYTIC,
    CLUSTER_RTOL_PERTURBED,
    DEFAULT_DELTA,
    DEFAULT_RADIUS,
    MAX_RESONANCE_COMPLEXITY,
    R_CUT,
    SERIES_SWITCH,
    SurfaceKind,
)
from ._utils import from_text, to_text
from .exceptions import ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SurfaceConfig(_Section):
    kind: SurfaceKind = "sphere"
    radius: float = Field(DEFAULT_RADIUS, gt=0)
    resolution: Tuple[int, int] = (24, 48)
    # flattened (l, m, weight) triples of a star surface
    harmonics: List[float] = []

    @field_validator("harmonics")
    @classmethod
    def _triples(cls, value: list[float]) -> list[float]:
        if len(value) % 3:
            raise ValueError("harmonics are given as l, m, weight triples")
        return value

    def harmonic_map(self) -> dict[tuple[int, int], float]:
        items = self.harmonics
        return {(int(items[i]), int(items[i + 1])): items[i + 2] for i in range(0, len(items), 3)}


class SweepConfig(_Section):
    eps: List[float] = Field(
        default_factory=lambda: [0.1 * 2 ** (-k / 2) for k in range(8)], min_length=2
    )
    r0bar: float = Field(0.0, ge=0, le=1)
    theta0: float = 0.0
    delta: float = Field(DEFAULT_DELTA, gt=0)
    psi: Tuple[float, float] = (1.0, 0.0)
    flat: bool = True

    @field_validator("eps")
    @classmethod
    def _decreasing(cls, value: list[float]) -> list[float]:
        if any(e <= 0 for e in value):
            raise ValueError("epsilon values must be positive")
        if any(a <= b for a, b in zip(value, value[1:])):
            raise ValueError("epsilon grid must be strictly decreasing")
        return value


class ToleranceConfig(_Section):
    series_switch: float = Field(SERIES_SWITCH, gt=0)
    r_cut: float = Field(R_CUT, gt=0)
    cluster_analytic: float = Field(CLUSTER_RTOL_ANALYTIC, gt=0)
    cluster_perturbed: float = Field(CLUSTER_RTOL_PERTURBED, gt=0)
    specfun: float = Field(1e-8, gt=0)
    kernels: float = Field(1e-3, gt=0)
    leading: float = Field(0.05, gt=0)
    resonance: float = Field(1e-9, ge=0)


class EigsConfig(_Section):
    n_max: int = Field(4, ge=1)
    k_max: int = Field(3, ge=1)
    l_max: int = Field(2, ge=1)
    t: float = 0.0
    mode: int = Field(2, ge=0)


class ResonanceConfig(_Section):
    spectrum: List[float] = []
    complexity: int = Field(12, ge=1)
    disk_terms: int = Field(12, ge=1)


class SpecfunConfig(_Section):
    z: List[float] = [0.0, 0.25, 0.5, 0.75, 1.0]


class ExperimentConfig(_Section):
    surface: SurfaceConfig = SurfaceConfig()
    sweep: SweepConfig = SweepConfig()
    tolerances: ToleranceConfig = ToleranceConfig()
    eigs: EigsConfig = EigsConfig()
    resonance: ResonanceConfig = ResonanceConfig()
    specfun: SpecfunConfig = SpecfunConfig()
    out: Optional[Path] = None
    seed: int = 0
    max_complexity: int = Field(MAX_RESONANCE_COMPLEXITY, ge=1)


_sections: dict[str, type[_Section]] = {
    "surface": SurfaceConfig,
    "sweep": SweepConfig,
    "tolerances": ToleranceConfig,
    "eigs": EigsConfig,
    "resonance": ResonanceConfig,
    "specfun": SpecfunConfig,
}

_top_level: dict[str, Any] = {"out": Path, "seed": int, "max_complexity": int}


def _type_spec(annotation: Any) -> Any:
    """Map a field annotation to a from_text type spec."""
    text = str(annotation)
    if text.startswith("typing.List") or text.startswith("list"):
        return [float]
    if text.startswith("typing.Tuple") or text.startswith("tuple"):
        return (int,) if "int" in text else (float,)
    if annotation in {int, float, bool, str, Path}:
        return annotation
    return str


def _convert(model: type[_Section], raw: dict[str, str]) -> dict[str, Any]:
    fields = model.model_fields
    converted = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown option {key!r} in section for {model.__name__}")
        converted[key] = from_text(_type_spec(fields[key].annotation), value)
    return converted


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as error:
        raise ConfigError(f"malformed configuration: {error}") from None

    values: dict[str, Any] = {}
    for name in parser.sections():
        if name == "run":
            for key, value in parser[name].items():
                if key not in _top_level:
                    raise ConfigError(f"unknown option {key!r} in section [run]")
                if value.strip():
                    values[key] = from_text(_top_level[key], value)
            continue
        if name not in _sections:
            raise ConfigError(f"unknown section [{name}]")
        values[name] = _convert(_sections[name], dict(parser[name]))

    try:
        return ExperimentConfig(**values)
    except ValidationError as error:
        raise ConfigError(str(error)) from None


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise ConfigError(f"cannot read configuration {str(path)!r}: {error.strerror}") from None
    if not text.strip():
        raise ConfigError(f"configuration {str(path)!r} is empty")
    return parse_config(text)


def config_template(config: ExperimentConfig | None = None) -> str:
    """Commented configuration listing every option with its current value."""
    config = config or ExperimentConfig()
    lines = ["# stokespec experiment configuration", "", "[run]"]
    lines += [f"{key} = {to_text(getattr(config, key))}" for key in _top_level]
    for name, model in _sections.items():
        section = getattr(config, name)
        lines += ["", f"[{name}]"]
        for key, field in model.model_fields.items():
            if field.description:
                lines.append(f"# {field.description}")
            lines.append(f"{key} = {to_text(getattr(section, key))}")
    return "\n".join(lines) + "\n"
