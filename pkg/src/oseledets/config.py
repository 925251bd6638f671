"""Run configuration: a flat key=value file, overridable from the command line."""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ParameterError
from .maps import MapModel, chirikov_taylor, generic_from_expressions, mcmillan_from_expression


class ConfigError(ParameterError):
    """Unknown key or malformed value in a configuration source."""


@dataclass
class ExperimentConfig:
    map_family: str = "ct"
    K: float = 2.0 * math.pi
    geometry: str = "torus"
    f: str = ""
    fx: str = ""
    fy: str = ""
    x0: float = 1e-3
    y0: float = 2e-3
    steps: int = 100_000
    transient: int | None = None
    engine: str = "scalar"
    seed: int = 1
    out: str = "out"
    grid: int = 100
    bins: int = 1000
    ensemble: int = 10_000
    restarts: int = 256
    quantity: str = "both"
    order: int = 2
    workers: int = 1
    stride: int = 1
    chunk: int = 1_000_000
    overlap: int = 1_000

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.map_family not in ("ct", "mcmillan-custom", "generic"):
            raise ConfigError(f"map.family: unknown family {self.map_family!r}")
        if self.geometry not in ("torus", "plane"):
            raise ConfigError(f"map.geometry: expected torus or plane, got {self.geometry!r}")
        if self.engine not in ("scalar", "general"):
            raise ConfigError(f"engine: expected scalar or general, got {self.engine!r}")
        if self.quantity not in ("psi", "eta", "both"):
            raise ConfigError(f"quantity: expected psi, eta or both, got {self.quantity!r}")
        for key in ("steps", "grid", "bins", "ensemble", "restarts", "workers", "stride", "chunk", "overlap"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{FIELD_TO_KEY.get(key, key)}: must be positive")
        if self.order < 0:
            raise ConfigError("order: must be non-negative")
        if self.transient is not None and self.transient < 0:
            raise ConfigError("transient: must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must fit in 64 bits")
        if self.map_family == "mcmillan-custom" and not self.f:
            raise ConfigError("map.f: required for mcmillan-custom maps")
        if self.map_family == "generic" and not (self.fx and self.fy):
            raise ConfigError("map.fx, map.fy: required for generic maps")

    def build_map(self) -> MapModel:
        if self.map_family == "ct":
            return chirikov_taylor(self.K, self.geometry)
        if self.map_family == "mcmillan-custom":
            return mcmillan_from_expression(self.f, {"K": self.K}, self.geometry)
        return generic_from_expressions(self.fx, self.fy, {"K": self.K}, self.geometry)

    def echo(self) -> dict[str, Any]:
        """Config as file keys, suitable for writing back with :func:`dump_config`."""
        d = asdict(self)
        return {FIELD_TO_KEY.get(k, k): v for k, v in d.items()}

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig(**{**asdict(self), **changes})


FIELD_TO_KEY = {"map_family": "map.family", "K": "map.K", "geometry": "map.geometry",
                "f": "map.f", "fx": "map.fx", "fy": "map.fy"}
KEY_TO_FIELD = {v: k for k, v in FIELD_TO_KEY.items()}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}

_NUMBER = re.compile(r"^[0-9eE+\-*/(). pi]+$")


def parse_real(text: str) -> float:
    """A float, optionally written with ``pi`` (e.g. ``2*pi``, ``pi/2``, ``1e-3``)."""
    t = text.strip()
    try:
        return float(t)
    except ValueError:
        pass
    if not _NUMBER.match(t) or "**" in t:
        raise ValueError(f"not a number: {text!r}")
    t = re.sub(r"(?<=[0-9.])\s*pi", "*pi", t)
    import sympy as sp

    try:
        v = float(sp.sympify(t, locals={"pi": sp.pi}))
    except (sp.SympifyError, TypeError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc
    return v


def _coerce(name: str, raw: Any) -> Any:
    kind = _TYPES[name]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "auto")):
        if "None" in kind:
            return None
        if kind == "str":
            return ""
    if not isinstance(raw, str):
        return raw
    try:
        if kind.startswith("int"):
            v = parse_real(raw)
            if v != int(v):
                raise ValueError(f"not an integer: {raw!r}")
            return int(v)
        if kind == "float":
            return parse_real(raw)
    except ValueError as exc:
        raise ConfigError(f"{FIELD_TO_KEY.get(name, name)}: {exc}") from None
    return raw.strip()


def normalize(values: Mapping[str, Any]) -> dict[str, Any]:
    """Map file keys (``map.K``) or field names (``K``) to typed field values."""
    out = {}
    for key, raw in values.items():
        name = KEY_TO_FIELD.get(key, key)
        if name not in _TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        out[name] = _coerce(name, raw)
    return out


def read_config_file(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in s.split("=", 1))
        entries[key] = value
    return entries


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if path is not None:
        values.update(normalize(read_config_file(path)))
    if overrides:
        values.update(normalize({k: v for k, v in overrides.items() if v is not None}))
    return ExperimentConfig(**values)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.echo().items():
        if value is None:
            value = "auto"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
