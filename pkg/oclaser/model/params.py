from dataclasses import dataclass, field, replace, fields
from typing import Dict, Any, Tuple
import math

import numpy as np

from ..utils.common import get_logger
from ..utils.errors import ParameterError, warn_physics

logger = get_logger(__name__)


@dataclass(frozen=True)
class LaserParams:
    """
    Physical inputs of the two-mode laser. Every rate is in units of the
    atomic decay rate, which is fixed to 1. The damping matrix is symmetric,
    so gamma12 also stands for gamma21.
    """
    g1: float
    g2: float
    delta: float
    gamma11: float
    gamma22: float
    gamma12: float
    pump_rate: float = 0.0

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "LaserParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: float(v) for k, v in d.items() if k in names})

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def g_squared(self) -> float:
        return self.g1 ** 2 + self.g2 ** 2

    @property
    def damping_matrix(self) -> np.ndarray:
        return np.array([[self.gamma11, self.gamma12], [self.gamma12, self.gamma22]], dtype=np.float64)


@dataclass(frozen=True)
class DerivedCoeffs:
    A: float
    B: float
    C1: float
    C2: float
    C3: float
    delta_bar: float
    g: float

    @property
    def b_over_a(self) -> float:
        # zero when saturation is switched off or nothing is pumped
        return self.B / self.A if self.A > 0 else 0.0

    @property
    def C1_tilde(self) -> float:
        return self.C1 * (1.0 + self.delta_bar ** 2)

    @property
    def A_tilde(self) -> float:
        return self.A * (1.0 + self.delta_bar ** 2)

    @property
    def pump_ratio(self) -> float:
        return self.A / self.C1_tilde

    @property
    def pump_rate(self) -> float:
        return self.A / (2.0 * self.g ** 2)

    def without_saturation(self) -> "DerivedCoeffs":
        return replace(self, B=0.0)

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class ModeTransform:
    """Rows map the bare operators (a1, a2) to the composite (alpha, beta)."""
    matrix: np.ndarray = field(repr=False)

    @property
    def alpha(self) -> np.ndarray:
        return self.matrix[0]

    @property
    def beta(self) -> np.ndarray:
        return self.matrix[1]


def validate_params(raw: LaserParams) -> LaserParams:
    for name in ("g1", "g2", "gamma11", "gamma22"):
        value = getattr(raw, name)
        if not (value > 0 and math.isfinite(value)):
            raise ParameterError(f"{name} must be positive, got {value}")
    if not (raw.pump_rate >= 0 and math.isfinite(raw.pump_rate)):
        raise ParameterError(f"pump_rate must be non-negative, got {raw.pump_rate}")
    if not (math.isfinite(raw.delta) and math.isfinite(raw.gamma12)):
        raise ParameterError(f"delta and gamma12 must be finite, got {raw.delta}, {raw.gamma12}")

    coeffs = derive_coeffs(raw)
    if coeffs.C2 <= 0:
        warn_physics(f"unphysical damping: C2 = {coeffs.C2:.6g} <= 0", logger)
    if raw.gamma12 ** 2 > raw.gamma11 * raw.gamma22:
        warn_physics(
            f"damping matrix is not positive semidefinite: "
            f"gamma12^2 = {raw.gamma12 ** 2:.6g} > gamma11*gamma22 = {raw.gamma11 * raw.gamma22:.6g}",
            logger
        )
    return raw


def derive_coeffs(params: LaserParams) -> DerivedCoeffs:
    g1, g2 = params.g1, params.g2
    g2sum = params.g_squared
    gamma11, gamma22, gamma12 = params.gamma11, params.gamma22, params.gamma12
    A = 2.0 * params.pump_rate * g2sum
    B = 4.0 * g2sum * A
    C1 = 2.0 * (gamma11 * g1 ** 2 + 2.0 * gamma12 * g1 * g2 + gamma22 * g2 ** 2) / g2sum
    C2 = 2.0 * (gamma11 * g2 ** 2 - 2.0 * gamma12 * g1 * g2 + gamma22 * g1 ** 2) / g2sum
    C3 = ((gamma11 - gamma22) * g1 * g2 + 2.0 * gamma12 * (g2 ** 2 - g1 ** 2)) / g2sum
    return DerivedCoeffs(A=A, B=B, C1=C1, C2=C2, C3=C3, delta_bar=params.delta, g=math.sqrt(g2sum))


def composite_transform(params: LaserParams) -> ModeTransform:
    g = math.sqrt(params.g_squared)
    if not g > 0:
        raise ParameterError(f"collective coupling must be positive, got {g}")
    matrix = np.array([
        [params.g1 / g, params.g2 / g],
        [params.g2 / g, -params.g1 / g],
    ], dtype=np.float64)
    return ModeTransform(matrix)


def threshold_pump_rate(params: LaserParams) -> float:
    coeffs = derive_coeffs(params)
    return coeffs.C1 * (1.0 + coeffs.delta_bar ** 2) / (2.0 * params.g_squared)


def with_pump_ratio(params: LaserParams, ratio: float) -> LaserParams:
    """Returns params whose pump gives A / C1_tilde = ratio."""
    if ratio < 0:
        raise ParameterError(f"pump_ratio must be non-negative, got {ratio}")
    return replace(params, pump_rate=ratio * threshold_pump_rate(params))


def scale_coupling(params: LaserParams, g_squared: float) -> LaserParams:
    """Rescales g1 and g2 at a fixed ratio so that g1^2 + g2^2 = g_squared."""
    s = math.sqrt(g_squared / params.g_squared)
    return replace(params, g1=params.g1 * s, g2=params.g2 * s)


def damping_discrepancy(params: LaserParams) -> Tuple[float, float]:
    """(2 * rotated cross coefficient, printed C3), for diagnostics."""
    # local import, superop imports this module
    from .superop import rotate_loss_to_composite
    _, _, c_ab = rotate_loss_to_composite(params)
    return 2.0 * c_ab, derive_coeffs(params).C3
