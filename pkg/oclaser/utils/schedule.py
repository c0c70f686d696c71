from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError

SWEEPABLE = ("pump_rate", "pump_ratio", "gamma12")


def make_sweep_schedule(scale: str, start: float, stop: float, steps: int) -> np.ndarray:
    if steps < 2:
        raise ConfigError(f"sweep needs at least 2 steps, got {steps}")
    if not start < stop:
        raise ConfigError(f"sweep needs from < to, got from={start} to={stop}")
    if scale == "linear":
        values = np.linspace(start, stop, steps, dtype=np.float64)
    elif scale == "log":
        if not start > 0:
            raise ConfigError(f"log sweep needs from > 0, got {start}")
        values = np.geomspace(start, stop, steps, dtype=np.float64)
    else:
        raise ConfigError(f"schedule '{scale}' unknown.")
    return values


@dataclass(frozen=True)
class SweepSpec:
    param: str
    start: float
    stop: float
    steps: int
    scale: Literal["linear", "log"] = "linear"

    def __post_init__(self) -> None:
        if self.param not in SWEEPABLE:
            raise ConfigError(f"cannot sweep '{self.param}', expected one of {', '.join(SWEEPABLE)}")
        # validates the remaining fields
        make_sweep_schedule(self.scale, self.start, self.stop, self.steps)

    def values(self) -> np.ndarray:
        return make_sweep_schedule(self.scale, self.start, self.stop, self.steps)
