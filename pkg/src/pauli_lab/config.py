"""Experiment configuration: a sectioned ``key = value`` text format.

Example::

    [field]
    b0 = 1.0
    btilde = step(1.0, 0.5)

    [potential]
    U0 = "1 + 0.5*cos(2θ)"
    m = 2.0
    form = regular

Parsing keeps line numbers so that validation errors point at the
offending line.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

from .magnetics import MagneticField, RadialProfile
from .potential import RADIAL_FORMS, Potential, TrigPolynomial

__all__ = ["ConfigError", "ExperimentConfig", "parse_field_profile"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


# key -> section; the order here is the serialization order
_SECTIONS = {
    "b0": "field",
    "btilde": "field",
    "field_r_max": "field",
    "U0": "potential",
    "m": "potential",
    "form": "potential",
    "r_cut": "potential",
    "phase": "potential",
    "e": "coupling",
    "e_sweep": "coupling",
    "K": "truncation",
    "Q": "truncation",
    "r0": "window",
    "r": "window",
    "r_lo": "window",
    "r_hi": "window",
    "n_thresholds": "window",
    "z_lo": "scan",
    "z_hi": "scan",
    "n_grid": "scan",
    "center": "contour",
    "radius": "contour",
    "points": "contour",
    "out": "output",
    "seed": "output",
}

_STEP = re.compile(r"^step\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)$")


def parse_field_profile(text: str, base: Path | None = None) -> RadialProfile:
    """``constant`` | ``step(r0, height)`` | ``csv:PATH`` (radius, value columns)."""
    s = text.strip()
    if s in ("constant", "zero", "0"):
        return RadialProfile.zero()
    m = _STEP.match(s)
    if m:
        return RadialProfile.step(float(m.group(1)), float(m.group(2)))
    if s.startswith("csv:"):
        path = Path(s[4:].strip())
        if base is not None and not path.is_absolute():
            path = base / path
        return RadialProfile.from_csv(path)
    raise ValueError(f"unknown field profile {text!r}; use constant, step(r0, height) or csv:PATH")


@dataclass(frozen=True)
class ExperimentConfig:
    b0: float = 1.0
    btilde: str = "constant"
    field_r_max: float = 10.0
    U0: str = "1"
    m: float = 2.0
    form: str = "regular"
    r_cut: float = 1.0
    phase: float = 0.0
    e: float = 0.1
    e_sweep: tuple[float, ...] = ()
    K: int = 512
    Q: int = 8
    r0: float = 0.1
    r: float = 0.01
    r_lo: float = 1e-3
    r_hi: float = 1e-2
    n_thresholds: int = 21
    z_lo: float | None = None  # defaults to -r0 e^2
    z_hi: float | None = None  # defaults to -r_lo e^2 / 2
    n_grid: int = 200
    center: float | None = None
    radius: float | None = None
    points: int = 64
    out: str = "results"
    seed: int = 0

    # -- conversion ---------------------------------------------------------

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_text(self) -> str:
        by_section: dict[str, list[str]] = {}
        for f in fields(self):
            val = getattr(self, f.name)
            by_section.setdefault(_SECTIONS[f.name], []).append(f"{f.name} = {_format(val)}")
        chunks = [f"[{sec}]\n" + "\n".join(lines) for sec, lines in by_section.items()]
        return "\n\n".join(chunks) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        lines = {}
        section = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith(("#", ";")):
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    raise ConfigError(f"malformed section header {line!r}", lineno, source)
                section = line[1:-1].strip()
                if section not in set(_SECTIONS.values()):
                    raise ConfigError(f"unknown section [{section}]", lineno, source)
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}", lineno, source)
            key, val = (p.strip() for p in _strip_comment(line).split("=", 1))
            if key not in types:
                raise ConfigError(f"unknown key {key!r}", lineno, source)
            if section is not None and _SECTIONS[key] != section:
                raise ConfigError(f"key {key!r} belongs in section [{_SECTIONS[key]}]", lineno, source)
            try:
                values[key] = _convert(val, types[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}", lineno, source) from None
            lines[key] = lineno
        cfg = cls(**values)
        cfg.validate(lines, source)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        return cls.from_text(p.read_text(encoding="utf-8"), str(p))

    # -- validation and model objects ---------------------------------------

    def validate(self, lines: dict | None = None, source: str = "<config>") -> None:
        lines = lines or {}

        def fail(key, msg):
            raise ConfigError(msg, lines.get(key), source)

        if not (math.isfinite(self.b0) and self.b0 > 0):
            fail("b0", f"b0 must be positive, got {self.b0}")
        if not (math.isfinite(self.m) and self.m > 0):
            fail("m", f"decay exponent m must satisfy m > 0 (|U(x)| <= C <x>^-m), got m = {self.m}")
        if self.form not in RADIAL_FORMS:
            fail("form", f"form must be one of {', '.join(RADIAL_FORMS)}")
        if self.form == "pure_power_tail" and not self.r_cut > 0:
            fail("r_cut", "r_cut must be positive")
        for key in ("K", "Q", "n_thresholds", "n_grid", "points"):
            if getattr(self, key) < 1:
                fail(key, f"{key} must be >= 1")
        if not 0 < self.r < self.r0:
            fail("r", f"window needs 0 < r < r0, got r = {self.r}, r0 = {self.r0}")
        if not 0 < self.r_lo < self.r_hi:
            fail("r_lo", "threshold range needs 0 < r_lo < r_hi")
        try:
            self.potential()
        except ValueError as exc:
            fail("U0", str(exc))
        try:
            fld = self.field()
        except (ValueError, OSError) as exc:
            fail("btilde", str(exc))
        for e in (self.e,) + tuple(self.e_sweep):
            if not math.isfinite(e):
                fail("e", "coupling must be finite")
            if self.r0 * e * e >= 0.5 * fld.zeta:
                fail("r0", f"window needs r0 e^2 < zeta/2 (r0 e^2 = {self.r0 * e * e:g}, zeta/2 = {0.5 * fld.zeta:g})")

    def field(self, base: Path | None = None) -> MagneticField:
        return MagneticField(self.b0, parse_field_profile(self.btilde, base), self.field_r_max)

    def potential(self) -> Potential:
        return Potential(TrigPolynomial.from_expression(self.U0), self.m, self.form, self.r_cut, self.phase)

    def metadata(self) -> dict:
        return {f.name: _format(getattr(self, f.name)) for f in fields(self)}


def _strip_comment(line: str) -> str:
    """Drop a trailing ``# ...`` comment that is not inside quotes."""
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return line[:i].rstrip()
    return line


def _format(val) -> str:
    if val is None:
        return "none"
    if isinstance(val, tuple):
        return ", ".join(repr(float(v)) for v in val)
    if isinstance(val, str):
        return '"' + val + '"' if any(c in val for c in "#;=") or val != val.strip() or " " in val else val
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _convert(text: str, typ):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    typ = str(typ)
    if "None" in typ and text.lower() == "none":
        return None
    typ = typ.replace(" | None", "")
    if typ == "float":
        return float(text)
    if typ == "int":
        v = float(text)
        if v != int(v):
            raise ValueError(f"expected an integer, got {text}")
        return int(v)
    if typ.startswith("tuple"):
        return tuple(float(p) for p in text.split(",") if p.strip())
    return text
