"""Strict flat key=value run configuration.

One `key = value` pair per line; blank lines and `#` comments are ignored.
Every key must belong to the documented schema below and parse to its
declared type, otherwise a ConfigError pointing at the offending line is
raised; nothing is written before the whole file validates. Strictness is
deliberate: the defaults encode the reference operating point (27 GHz,
gamma 0.5, 20 kept modes, 8 pixels per port, 0.24-wavelength pixels), and a
silently ignored typo would drift results away from it.

Schema (defaults in parentheses):
  frequency            Hz (27e9)
  pixel_size           meters; "auto" = 0.24 c/frequency ("auto")
  gamma                DoF threshold in (0,1) (0.5)
  n_keep               modes kept per plate (20)
  separation           plate separation along z in meters (0.3)
  seed                 RNG seed (0)
  jobs                 worker processes for fitness fan-out (1)
  out                  output directory (".")
  tx_ports, rx_ports   ports = pixel rows per plate (4)
  tx_pixels_per_port   pixel columns per plate (8); same for rx_
  tx_bits, rx_bits     configuration: "ones", "zeros", or a 0/1 string of
                       exactly rows*cols bits ("ones")
  generations          GA generation budget (10)
  population           GA population size (10)
  parents              GA parents per generation, even (6)
  mutation_rate        per-bit probability; "auto" = 1/bit_length ("auto")
  resume               continue from the checkpoint in `out` (false)
  sweep_axis           "ports" | "separation" | "gamma" (no default)
  sweep_values         comma-separated numbers (no default)
  random_count         random baseline configurations per sweep point (5)
  mesh_format          "text" | "json" for export-mesh ("text")
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from scipy.constants import c as C0

from .errors import ConfigError

__all__ = ["RunConfig", "parse_config_file", "load_run_config"]


def _parse_float(text: str) -> float:
    return float(text)


def _parse_int(text: str) -> int:
    value = int(text, 0)
    return value


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_auto_float(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _parse_bits(text: str) -> str:
    low = text.strip().lower()
    if low in ("ones", "zeros"):
        return low
    if low and set(low) <= {"0", "1"}:
        return low
    raise ValueError(
        f"bits must be 'ones', 'zeros', or a 0/1 string, got {text!r}"
    )


def _parse_choice(*options: str):
    def parse(text: str) -> str:
        low = text.strip().lower()
        if low not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return low
    return parse


def _parse_values(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty value list")
    return tuple(float(p) for p in parts)


# key -> (parser, default); None default means "unset unless given"
_SCHEMA = {
    "frequency": (_parse_float, 27e9),
    "pixel_size": (_parse_auto_float, None),
    "gamma": (_parse_float, 0.5),
    "n_keep": (_parse_int, 20),
    "separation": (_parse_float, 0.3),
    "seed": (_parse_int, 0),
    "jobs": (_parse_int, 1),
    "out": (str, "."),
    "tx_ports": (_parse_int, 4),
    "rx_ports": (_parse_int, 4),
    "tx_pixels_per_port": (_parse_int, 8),
    "rx_pixels_per_port": (_parse_int, 8),
    "tx_bits": (_parse_bits, "ones"),
    "rx_bits": (_parse_bits, "ones"),
    "generations": (_parse_int, 10),
    "population": (_parse_int, 10),
    "parents": (_parse_int, 6),
    "mutation_rate": (_parse_auto_float, None),
    "resume": (_parse_bool, False),
    "sweep_axis": (_parse_choice("ports", "separation", "gamma"), None),
    "sweep_values": (_parse_values, None),
    "random_count": (_parse_int, 5),
    "mesh_format": (_parse_choice("text", "json"), "text"),
}


@dataclass
class RunConfig:
    """Typed, validated run parameters (one instance per invocation)."""

    frequency: float = 27e9
    pixel_size: float | None = None
    gamma: float = 0.5
    n_keep: int = 20
    separation: float = 0.3
    seed: int = 0
    jobs: int = 1
    out: str = "."
    tx_ports: int = 4
    rx_ports: int = 4
    tx_pixels_per_port: int = 8
    rx_pixels_per_port: int = 8
    tx_bits: str = "ones"
    rx_bits: str = "ones"
    generations: int = 10
    population: int = 10
    parents: int = 6
    mutation_rate: float | None = None
    resume: bool = False
    sweep_axis: str | None = None
    sweep_values: tuple[float, ...] | None = None
    random_count: int = 5
    mesh_format: str = "text"

    def effective_pixel_size(self) -> float:
        if self.pixel_size is not None:
            return self.pixel_size
        return 0.24 * C0 / self.frequency

    def validate(self) -> None:
        if self.frequency <= 0:
            raise ConfigError("frequency must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.n_keep < 1:
            raise ConfigError("n_keep must be at least 1")
        if self.pixel_size is not None and self.pixel_size <= 0:
            raise ConfigError("pixel_size must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        for name in ("tx_ports", "rx_ports",
                     "tx_pixels_per_port", "rx_pixels_per_port"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for side in ("tx", "rx"):
            bits = getattr(self, f"{side}_bits")
            n = getattr(self, f"{side}_ports") * \
                getattr(self, f"{side}_pixels_per_port")
            if bits not in ("ones", "zeros") and len(bits) != n:
                raise ConfigError(
                    f"{side}_bits has {len(bits)} bits, plate needs {n}"
                )
        if self.population < 2:
            raise ConfigError("population must be at least 2")
        if self.parents < 2 or self.parents % 2:
            raise ConfigError("parents must be even and at least 2")
        if self.generations < 0:
            raise ConfigError("generations must be non-negative")
        if self.mutation_rate is not None and not 0 <= self.mutation_rate <= 1:
            raise ConfigError("mutation_rate must lie in [0, 1]")
        if self.random_count < 1:
            raise ConfigError("random_count must be at least 1")
        if (self.sweep_values is not None and self.sweep_axis is None) or \
                (self.sweep_axis is not None and self.sweep_values is None):
            raise ConfigError(
                "sweep_axis and sweep_values must be given together"
            )


def parse_config_file(path: str) -> dict:
    """Parse one key=value file into typed values; strict on every line."""
    values: dict = {}
    seen_lines: dict[str, int] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"
                )
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in seen_lines:
                raise ConfigError(
                    f"{path}:{lineno}: duplicate key {key!r} "
                    f"(first set on line {seen_lines[key]})"
                )
            parser, _ = _SCHEMA[key]
            try:
                values[key] = parser(value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"{path}:{lineno}: bad value for {key!r}: {exc}"
                ) from None
            seen_lines[key] = lineno
    return values


def load_run_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """RunConfig from defaults, then the file, then explicit overrides."""
    values = dict(parse_config_file(path)) if path else {}
    if overrides:
        known = {f.name for f in fields(RunConfig)}
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown override {key!r}")
            values[key] = val
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg
