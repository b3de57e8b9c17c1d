"""Experiment configuration: INI-style ``key = value`` files with four sections."""

from __future__ import annotations

import ast
import configparser
from dataclasses import asdict, dataclass, fields
from typing import Tuple

from .covariance import CovarianceModel
from .errors import ValidationError

SECTIONS = {
    "experiment": (
        "example",
        "levels",
        "methods",
        "reference_level",
        "reference_samples",
        "seeds",
        "fit_levels",
        "output_dir",
        "write_vtk",
    ),
    "covariance": ("amplitude", "length_scale_denominator", "diagonal_multipliers", "boundary_damping", "max_rank"),
    "solver": ("a", "rtol", "max_iter", "max_level"),
    "quadrature": ("delta",),
}
_ROOT = "__root__"
METHODS = ("MC", "QMC", "SG")


class ConfigError(ValidationError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    example: int = 1
    levels: Tuple[int, ...] = (0, 1, 2, 3)
    methods: Tuple[str, ...] = METHODS
    reference_level: int = 4
    reference_samples: int = 1000
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    fit_levels: Tuple[int, ...] = (1, 2, 3)
    output_dir: str = "results"
    write_vtk: bool = False
    amplitude: float = 0.01
    length_scale_denominator: float = 50.0
    diagonal_multipliers: Tuple[float, ...] = (1.0, 9.0, 9.0)
    boundary_damping: bool = True
    max_rank: int = 1000
    a: float = 0.12
    rtol: float = 1e-10
    max_iter: int = 0  # 0: automatic
    max_level: int = 6
    delta: float = 0.2

    def __post_init__(self):
        try:
            for f in fields(self):
                object.__setattr__(self, f.name, _coerce(f.name, getattr(self, f.name), f.default))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        self.validate()

    def validate(self):
        problems = []
        if self.example not in (1, 2):
            problems.append(f"example must be 1 or 2, got {self.example}")
        if not self.levels or min(self.levels) < 0:
            problems.append("levels must be a nonempty list of nonnegative integers")
        elif self.reference_level <= max(self.levels):
            problems.append(f"reference_level ({self.reference_level}) must exceed max(levels) ({max(self.levels)})")
        if self.reference_level > self.max_level:
            problems.append(f"reference_level ({self.reference_level}) exceeds max_level ({self.max_level})")
        if not self.methods:
            problems.append("methods must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            problems.append(f"unknown methods {bad}; choose from {list(METHODS)}")
        if self.a <= 0:
            problems.append(f"a must be positive, got {self.a}")
        if self.reference_samples < 1:
            problems.append("reference_samples must be positive")
        if "MC" in self.methods and not self.seeds:
            problems.append("MC needs at least one seed")
        if not 0 < self.delta < 1:
            problems.append("delta must lie in (0, 1)")
        if not 0 < self.rtol < 1:
            problems.append("rtol must lie in (0, 1)")
        if self.amplitude < 0 or self.length_scale_denominator <= 0:
            problems.append("covariance amplitude must be >= 0 and length_scale_denominator > 0")
        if len(self.diagonal_multipliers) != 3 or min(self.diagonal_multipliers) < 0:
            problems.append("diagonal_multipliers must be three nonnegative numbers")
        if self.max_rank < 1 or self.max_iter < 0:
            problems.append("max_rank must be >= 1 and max_iter >= 0")
        if problems:
            raise ConfigError("; ".join(problems))

    def covariance_model(self) -> CovarianceModel:
        return CovarianceModel(
            amplitude=self.amplitude,
            length_scale_denominator=self.length_scale_denominator,
            diagonal_multipliers=self.diagonal_multipliers,
            boundary_damping=self.boundary_damping,
        )

    @property
    def solver_max_iter(self):
        return self.max_iter or None


def _coerce(name, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{name} must be true or false")
        return value
    if isinstance(default, tuple):
        if isinstance(value, (str, int, float)):
            value = (value,)
        kind = type(default[0])
        return tuple(_coerce(name, v, kind()) for v in value)
    if isinstance(default, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise TypeError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        return str(value)
    return value


def _literal(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        # bare words and lists of them: ``methods = QMC, SG`` or ``[QMC, SG]``
        bracketed = text.startswith("[") and text.endswith("]")
        inner = text[1:-1] if bracketed else text
        parts = [p.strip() for p in inner.split(",") if p.strip()]
        if bracketed or len(parts) > 1:
            return tuple(_literal(p) for p in parts)
        return text


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; keys before any section header are matched by name."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_ROOT}]\n" + text)
    except configparser.ParsingError as exc:
        lines = ", ".join(f"line {n - 1}: {line.strip()}" for n, line in exc.errors)
        raise ConfigError(f"syntax error at {lines}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f" at line {lineno - 1}" if lineno else ""
        raise ConfigError(f"syntax error{where}: {exc.message}") from None

    values, unknown = {}, []
    for section in parser.sections():
        allowed = [k for keys in SECTIONS.values() for k in keys] if section == _ROOT else SECTIONS.get(section)
        if allowed is None:
            unknown.append(f"[{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in allowed:
                unknown.append(key if section == _ROOT else f"{section}.{key}")
            elif key in values:
                raise ConfigError(f"key {key!r} given more than once")
            else:
                values[key] = _literal(raw)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**values)


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "[" + ", ".join(repr(v) for v in value) + "]"
    return repr(value)


def format_config(config: ExperimentConfig) -> str:
    """Fully resolved config text; ``parse_config(format_config(c)) == c``."""
    data = asdict(config)
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        out += [f"{key} = {_format_value(data[key])}" for key in keys]
        out.append("")
    return "\n".join(out)
