from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

INFINITY = math.inf

VARIANTS = ("base", "net")
ENCODERS = ("cmf", "recurrent")
ATTENTIONS = ("cqa", "cat")


def parse_alpha(value) -> float:
    """Accept a number or the strings "inf"/"infinity"; configs and CSVs spell infinity as "inf"."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "∞"):
            return INFINITY
        value = float(value)
    value = float(value)
    if not value >= 0:
        raise ConfigError(f"extension ratio must be >= 0, got {value}")
    return value


def format_alpha(alpha: float) -> str:
    return "inf" if math.isinf(alpha) else repr(float(alpha))


@dataclass(frozen=True)
class ModelConfig:
    video_dim: int = 1024
    query_dim: int = 300
    hidden: int = 128
    kernel_size: int = 7
    heads: int = 8
    conv_layers: int = 4
    dropout: float = 0.2
    alpha: float = 0.1
    variant: str = "net"
    encoder: str = "cmf"
    attention: str = "cqa"
    highlight_kernel: int = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.attention not in ATTENTIONS:
            raise ConfigError(f"attention must be one of {ATTENTIONS}, got {self.attention!r}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden size {self.hidden} not divisible by {self.heads} heads")
        if self.encoder == "recurrent" and self.hidden % 2:
            raise ConfigError("recurrent encoder needs an even hidden size")
        for name in ("kernel_size", "highlight_kernel"):
            if getattr(self, name) % 2 == 0:
                raise ConfigError(f"{name} must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = format_alpha(self.alpha)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)
