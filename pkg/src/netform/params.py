from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class PhysParams:
    """Diffusion ``D``, activation ``E`` and relaxation exponent ``gamma``."""

    D: float = 1.0
    E: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        for name in ("D", "E"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ConfigError(f"phys.{name}", f"must lie in (0, inf), got {v}")
        if not (self.gamma > 0.5 and math.isfinite(self.gamma)):
            raise ConfigError("phys.gamma", f"must lie in (1/2, inf), got {self.gamma}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhysParams":
        try:
            return cls(float(d.get("D", 1.0)), float(d.get("E", 1.0)), float(d.get("gamma", 1.0)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("phys", str(exc)) from exc
