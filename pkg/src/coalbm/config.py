"""Run configuration: a flat key=value text format with exact parsing.

The file format is diff friendly and round-trips losslessly (floats use
shortest round-trip repr).  Command-line flags override file values.
Every output file records the hash of the producing config, so reruns
with an identical config are byte-identical.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace

__all__ = ["SimConfig", "parse_config", "dump_config", "config_hash"]

_TOPOLOGIES = ("line", "circle")
_STOPS = ("single_block", "min_block_size", "horizon")


@dataclass(frozen=True)
class SimConfig:
    """Everything a simulation run needs, in one serializable record."""

    n: int = 20
    topology: str = "line"
    m_max: int = 1
    dt: float = 1e-4            # scale factor when dt_scaled, else absolute
    dt_scaled: bool = True      # dt_effective = dt / n**2 when scaled
    t_max: float = 4.0
    tolerance_divisor: float = 1024.0
    stop: str = "min_block_size"
    stop_m: int = 0             # block-size threshold; 0 tracks m_max
    nu: float = 0.0
    seed: int = 20260801
    replicates: int = 100
    workers: int = 1
    epsilon: float = 0.01
    adaptive: bool = True
    growth: float = 0.25
    sample_every: int = 0       # 0 disables position sampling
    out_dir: str = ""

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.topology not in _TOPOLOGIES:
            raise ValueError(f"topology must be one of {_TOPOLOGIES}")
        if not (1 <= self.m_max < self.n):
            raise ValueError(f"need 1 <= m_max < n, got m_max={self.m_max}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max}")
        if self.tolerance_divisor < 2:
            raise ValueError("tolerance_divisor must be >= 2")
        if self.stop not in _STOPS:
            raise ValueError(f"stop must be one of {_STOPS}")
        if self.stop_m < 0:
            raise ValueError("stop_m must be >= 0 (0 tracks m_max)")
        if self.nu < 0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not (0 < self.epsilon < 2.0 / 3.0):
            raise ValueError(f"epsilon must lie in (0, 2/3), got {self.epsilon}")
        if not (0 <= self.growth):
            raise ValueError("growth must be nonnegative")

    @property
    def dt_effective(self) -> float:
        return self.dt / (self.n * self.n) if self.dt_scaled else self.dt

    def stop_rule(self):
        from .engine import StopRule
        if self.stop == "single_block":
            return StopRule.single_block()
        if self.stop == "min_block_size":
            return StopRule.all_blocks_larger_than(self.stop_m or self.m_max)
        return StopRule.horizon_only()

    def override(self, **kwargs) -> "SimConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **kwargs)


_BOOL_FIELDS = {"dt_scaled", "adaptive"}
_INT_FIELDS = {"n", "m_max", "stop_m", "seed", "replicates", "workers",
               "sample_every"}
_FLOAT_FIELDS = {"dt", "t_max", "tolerance_divisor", "nu", "epsilon", "growth"}


def dump_config(cfg: SimConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _BOOL_FIELDS:
            v = int(v)
        elif f.name in _FLOAT_FIELDS:
            v = repr(float(v))
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> SimConfig:
    """Parse key=value lines; '#' starts a comment, blank lines ignored."""
    values = {}
    names = {f.name for f in fields(SimConfig)}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in names:
            raise ValueError(f"line {ln}: unknown key {key!r}")
        if key in _BOOL_FIELDS:
            values[key] = bool(int(val))
        elif key in _INT_FIELDS:
            values[key] = int(val)
        elif key in _FLOAT_FIELDS:
            values[key] = float(val)
        else:
            values[key] = val
    return SimConfig(**values)


def config_hash(cfg: SimConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:12]
