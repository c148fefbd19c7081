"""Scenario configuration: a line-oriented ``key = value`` format with ``[section]`` headers.

Each section is validated by a pydantic model. Problems are collected across
the whole file and raised together as one :class:`ConfigError`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Annotated, Final, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

if TYPE_CHECKING:
    from collections.abc import Mapping
    from pathlib import Path

logger = logging.getLogger(__name__)

ScenarioName = Literal[
    "closed",
    "position-measurement",
    "epr-position",
    "epr-momentum",
    "kernel-validation",
    "oracle-comparison",
]
OutputFormat = Literal["csv", "abs", "raw", "flux"]

COMMAND_LINE: Final = 0


@dataclass(frozen=True, slots=True)
class ConfigIssue:
    section: str
    line: int
    key: str | None
    message: str

    def __str__(self) -> str:
        where = "command line" if self.line == COMMAND_LINE else f"line {self.line}"
        key = f" {self.key}:" if self.key else ""
        return f"[{self.section}] {where}:{key} {self.message}"


class ConfigError(ValueError):
    """One or more configuration problems."""

    def __init__(self, issues: list[ConfigIssue]) -> None:
        self.issues = issues
        super().__init__("\n".join(str(issue) for issue in issues))


def _split_list(value: object) -> object:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Section):
    name: ScenarioName


class GridSection(_Section):
    n: Annotated[int, Field(ge=8)] = 128
    x_min: float = -20.0
    x_max: float = 20.0

    @field_validator("n")
    @classmethod
    def _even(cls, n: int) -> int:
        if n % 2:
            msg = "must be even"
            raise ValueError(msg)
        return n

    @model_validator(mode="after")
    def _ordered(self) -> GridSection:
        if not self.x_max > self.x_min:
            msg = "x_max must exceed x_min"
            raise ValueError(msg)
        return self


class PhysicsSection(_Section):
    hbar: PositiveFloat = 1.0
    mass: PositiveFloat = 1.0
    mass2: PositiveFloat = 1.0
    potential: Literal["free", "harmonic", "barrier"] = "free"
    omega: PositiveFloat = 1.0
    center: float = 0.0
    barrier_height: float = 0.0
    barrier_left: float = -1.0
    barrier_right: float = 1.0
    dephasing_rate: NonNegativeFloat = 0.0
    dephasing_length: PositiveFloat = 1.0


class StateSection(_Section):
    center: float = 0.0
    sigma: PositiveFloat = 1.0
    momentum: float = 0.0


class DetectorSection(_Section):
    centers: list[float] | None = None
    width: PositiveFloat = 2.0
    gain: NonNegativeFloat = 3000.0
    fire: Annotated[int, Field(ge=0)] | None = None
    t_r: NonNegativeFloat = 0.0
    weights: list[NonNegativeFloat] | None = None
    duration: PositiveFloat = 0.01

    _lists = field_validator("centers", "weights", mode="before")(_split_list)


class EprSection(_Section):
    x0: float = 0.0
    x2m: float | None = None
    p2m: float | None = None
    sigma_rel: PositiveFloat = 0.1
    sigma_cm: PositiveFloat = 1.0
    p_scale: float = 0.0
    width: PositiveFloat = 1.0
    band_spacings: PositiveInt = 3
    gain: NonNegativeFloat = 300.0
    duration: PositiveFloat = 0.1
    flight_time: NonNegativeFloat = 0.6
    grid_n: Annotated[int, Field(ge=8)] | None = None
    sweep_widths: list[PositiveFloat] | None = None

    _lists = field_validator("sweep_widths", mode="before")(_split_list)


class EvolveSection(_Section):
    dt: PositiveFloat = 0.01
    steps: PositiveInt = 100
    record_every: PositiveInt = 1
    normalize_every: PositiveInt | Literal["end"] = 1
    splitting: Literal["strang", "gain-first", "unitary-first"] = "strang"


class EnsembleSection(_Section):
    n_runs: PositiveInt = 1000
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    rule: Literal["born", "custom"] = "born"
    workers: PositiveInt = 1


class KernelSection(_Section):
    t: PositiveFloat = 1.0
    slices: list[PositiveInt] = Field(default_factory=lambda: [8, 16, 32, 64])
    sigma: PositiveFloat = 1.0
    center: float = 0.0
    damping_time: PositiveFloat | None = None

    _lists = field_validator("slices", mode="before")(_split_list)


class CompositeSection(_Section):
    interaction: Literal["none", "contact"] = "contact"
    strength: float = 5.0
    range: PositiveFloat = 0.5
    separation: PositiveFloat = 6.0
    momentum: float = 3.0
    sigma: PositiveFloat = 1.0
    steps: PositiveInt = 100
    grid_n: Annotated[int, Field(ge=8)] | None = None


class OutputSection(_Section):
    out_dir: str = "out"
    formats: list[OutputFormat] = Field(default_factory=lambda: ["csv"])
    snapshots: list[Annotated[int, Field(ge=0)]] | None = None

    _lists = field_validator("formats", "snapshots", mode="before")(_split_list)


class ScenarioConfig(_Section):
    """Fully resolved configuration of one scenario run."""

    scenario: ScenarioName
    grid: GridSection = GridSection()
    physics: PhysicsSection = PhysicsSection()
    state: StateSection = StateSection()
    detector: DetectorSection = DetectorSection()
    epr: EprSection = EprSection()
    evolve: EvolveSection = EvolveSection()
    ensemble: EnsembleSection = EnsembleSection()
    kernel: KernelSection = KernelSection()
    composite: CompositeSection = CompositeSection()
    output: OutputSection = OutputSection()


_SECTIONS: Final[dict[str, type[_Section]]] = {
    "scenario": ScenarioSection,
    "grid": GridSection,
    "physics": PhysicsSection,
    "state": StateSection,
    "detector": DetectorSection,
    "epr": EprSection,
    "evolve": EvolveSection,
    "ensemble": EnsembleSection,
    "kernel": KernelSection,
    "composite": CompositeSection,
    "output": OutputSection,
}

# Keys a scenario cannot run without, beyond the section defaults.
_REQUIRED: Final[dict[str, tuple[tuple[str, str], ...]]] = {
    "position-measurement": (("detector", "centers"),),
    "epr-position": (("epr", "x2m"),),
    "epr-momentum": (("epr", "p2m"),),
}


@dataclass(slots=True)
class _RawSection:
    line: int
    values: dict[str, object]
    lines: dict[str, int]


def _read(text: str, issues: list[ConfigIssue]) -> dict[str, _RawSection]:
    raw: dict[str, _RawSection] = {}
    current: str | None = None
    for lineno, full in enumerate(text.splitlines(), start=1):
        line = full.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                issues.append(ConfigIssue(current, lineno, None, "unknown section"))
            raw.setdefault(current, _RawSection(lineno, {}, {}))
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            issues.append(
                ConfigIssue(current or "-", lineno, None, "expected 'key = value'")
            )
            continue
        if current is None:
            issues.append(ConfigIssue("-", lineno, key, "key outside of any section"))
            continue
        section = raw[current]
        if key in section.values:
            first = section.lines[key]
            issues.append(
                ConfigIssue(current, lineno, key, f"duplicate key, first set on line {first}")
            )
            continue
        section.values[key] = value.strip()
        section.lines[key] = lineno
    return raw


def _apply_overrides(
    raw: dict[str, _RawSection], overrides: Mapping[str, Mapping[str, object]]
) -> None:
    for name, values in overrides.items():
        section = raw.setdefault(name, _RawSection(COMMAND_LINE, {}, {}))
        for key, value in values.items():
            if value is None:
                continue
            section.values[key] = value
            section.lines[key] = COMMAND_LINE


def _issues_from(name: str, section: _RawSection, exc: ValidationError) -> list[ConfigIssue]:
    issues: list[ConfigIssue] = []
    for error in exc.errors():
        loc = error["loc"]
        key = str(loc[0]) if loc else None
        line = section.lines.get(key, section.line) if key else section.line
        if error["type"] == "extra_forbidden":
            message = "unknown key"
        elif error["type"] == "missing":
            message = "missing required key"
        else:
            message = error["msg"]
        issues.append(ConfigIssue(name, line, key, message))
    return issues


def parse_config(
    text: str, *, overrides: Mapping[str, Mapping[str, object]] | None = None
) -> ScenarioConfig:
    """Parse and validate a scenario configuration.

    Parameters
    ----------
    text
        Configuration text.
    overrides
        ``{section: {key: value}}`` applied on top of ``text``; ``None`` values
        are ignored. Used for command-line flags.

    Raises
    ------
    ConfigError
        Listing every problem found, each with its section and line.
    """
    issues: list[ConfigIssue] = []
    raw = _read(text, issues)
    if overrides:
        _apply_overrides(raw, overrides)

    sections: dict[str, _Section] = {}
    for name, model in _SECTIONS.items():
        section = raw.get(name)
        if section is None:
            if name == "scenario":
                issues.append(ConfigIssue(name, COMMAND_LINE, "name", "missing required key"))
            continue
        try:
            sections[name] = model.model_validate(section.values)
        except ValidationError as exc:
            issues.extend(_issues_from(name, section, exc))

    scenario = sections.get("scenario")
    if isinstance(scenario, ScenarioSection):
        for name, key in _REQUIRED.get(scenario.name, ()):
            parsed = sections.get(name)
            if name in raw and parsed is None:
                continue
            if parsed is None or getattr(parsed, key) is None:
                line = raw[name].line if name in raw else COMMAND_LINE
                issues.append(ConfigIssue(name, line, key, "missing required key"))
        detector = sections.get("detector")
        if isinstance(detector, DetectorSection):
            issues.extend(_check_detector(detector, raw["detector"]))

    if issues:
        raise ConfigError(issues)
    assert isinstance(scenario, ScenarioSection)
    config = ScenarioConfig(
        scenario=scenario.name,
        **{name: value for name, value in sections.items() if name != "scenario"},
    )
    logger.debug("parsed %s configuration", config.scenario)
    return config


def _check_detector(detector: DetectorSection, raw: _RawSection) -> list[ConfigIssue]:
    issues: list[ConfigIssue] = []
    count = len(detector.centers or ())
    if detector.fire is not None and detector.fire >= count:
        line = raw.lines.get("fire", raw.line)
        issues.append(
            ConfigIssue("detector", line, "fire", f"index out of range for {count} elements")
        )
    if detector.weights is not None and len(detector.weights) != count:
        line = raw.lines.get("weights", raw.line)
        issues.append(
            ConfigIssue("detector", line, "weights", f"expected {count} weights")
        )
    return issues


def load_config(
    path: Path, *, overrides: Mapping[str, Mapping[str, object]] | None = None
) -> ScenarioConfig:
    return parse_config(path.read_text(encoding="utf-8"), overrides=overrides)


def _render_value(value: object) -> str:
    if isinstance(value, list):
        return ", ".join(_render_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(config: ScenarioConfig) -> str:
    """Serialize a resolved configuration back to the text format."""
    lines = ["[scenario]", f"name = {config.scenario}"]
    for name in _SECTIONS:
        if name == "scenario":
            continue
        section: _Section = getattr(config, name)
        lines.extend(("", f"[{name}]"))
        for key, value in section.model_dump().items():
            if value is not None:
                lines.append(f"{key} = {_render_value(value)}")
    return "\n".join(lines) + "\n"
