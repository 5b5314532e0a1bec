"""Run configuration: INI-style files (`key=value`, `#` comments)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields


@dataclass
class AmrConfig:
    domain_size: float = 2.0
    max_level: int = 2
    threshold: float = 0.25      # initial density above this refines a node
    theta: float = 0.5           # gravity opening parameter
    gamma: float = 5.0 / 3.0
    omega: float = 0.2           # rigid rotation rate about z
    r0: float = 0.3              # density blob radius
    steps: int = 5
    dt_safety: float = 0.4
    density_floor: float = 1e-4
    pressure_scale: float = 0.05
    average_power_w: float = 3.22
    leaf_budget: int = 32768

    def validate(self) -> "AmrConfig":
        if self.domain_size <= 0:
            raise ValueError("domain_size must be positive")
        if self.max_level < 0:
            raise ValueError("max_level must be >= 0")
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.gamma <= 1:
            raise ValueError("gamma must exceed 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not 0 < self.dt_safety <= 1:
            raise ValueError("dt_safety must be in (0, 1]")
        if self.density_floor <= 0:
            raise ValueError("density_floor must be positive")
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        return self

    # fixed-order binary form, shipped to workers with the tree
    def pack(self) -> bytes:
        out = b""
        for f in fields(self):
            out += struct.pack("<d", float(getattr(self, f.name)))
        return out

    @classmethod
    def unpack(cls, buf: bytes, off: int = 0) -> tuple["AmrConfig", int]:
        vals = {}
        for f in fields(cls):
            (v,) = struct.unpack_from("<d", buf, off)
            off += 8
            vals[f.name] = int(v) if f.name in _INT_FIELDS else v
        return cls(**vals), off


_INT_FIELDS = {"max_level", "steps", "leaf_budget"}
_FIELD_NAMES = {f.name for f in fields(AmrConfig)}


def parse_ini(path: str) -> AmrConfig:
    """Load a config file; unknown keys are rejected."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _FIELD_NAMES:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            caster = int if key in _INT_FIELDS else float
            try:
                values[key] = caster(value)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {e}") from e
    return AmrConfig(**values).validate()
