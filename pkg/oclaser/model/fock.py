from dataclasses import dataclass, field
from typing import Tuple, Literal
import math

import numpy as np

from .params import DerivedCoeffs
from ..utils.common import get_logger
from ..utils.errors import ParameterError, SolverError, warn_physics

logger = get_logger(__name__)

Mode = Literal["alpha", "beta"]

NEGATIVITY_TOLERANCE = 1e-12
MARGINAL_TRACE_TOLERANCE = 1e-6
DEFAULT_N_MAX_BETA = 15


@dataclass(frozen=True)
class FockGrid:
    """Inclusive photon-number cutoffs of the composite modes."""
    n_max_alpha: int
    n_max_beta: int

    def __post_init__(self) -> None:
        if self.n_max_alpha < 1 or self.n_max_beta < 1:
            raise ParameterError(
                f"grid cutoffs must be >= 1, got ({self.n_max_alpha}, {self.n_max_beta})"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_max_alpha + 1, self.n_max_beta + 1)

    @property
    def size(self) -> int:
        return (self.n_max_alpha + 1) * (self.n_max_beta + 1)

    def index(self, n_alpha: int, n_beta: int) -> int:
        return n_alpha * (self.n_max_beta + 1) + n_beta

    def grow(self, mode: Mode, factor: int = 2) -> "FockGrid":
        if mode == "alpha":
            return FockGrid(self.n_max_alpha * factor, self.n_max_beta)
        return FockGrid(self.n_max_alpha, self.n_max_beta * factor)


@dataclass(eq=False)
class DiagonalState:
    grid: FockGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.grid.shape)

    @property
    def trace(self) -> float:
        return float(self.values.sum())

    def normalized(self) -> "DiagonalState":
        return DiagonalState(self.grid, self.values / self.trace)

    def copy(self) -> "DiagonalState":
        return DiagonalState(self.grid, self.values.copy())


@dataclass(eq=False)
class CoherenceBlock:
    """
    Entries rho(n_a, n_b; n_a + k1, n_b + k2) stored at values[n_a, n_b].
    Only offsets with k1 > 0, or k1 == 0 and k2 >= 0 are stored; the
    opposite offset is the complex conjugate.
    """
    grid: FockGrid
    k1: int
    k2: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not (self.k1 > 0 or (self.k1 == 0 and self.k2 >= 0)):
            raise ParameterError(f"offset ({self.k1}, {self.k2}) is stored as its conjugate")
        if abs(self.k1) > self.grid.n_max_alpha or abs(self.k2) > self.grid.n_max_beta:
            raise ParameterError(f"offset ({self.k1}, {self.k2}) does not fit the grid {self.grid}")
        self.values = np.asarray(self.values, dtype=np.complex128).reshape(self.grid.shape)
        self.values = self.values * self.support_mask()

    def support_mask(self) -> np.ndarray:
        return block_support(self.grid, self.k1, self.k2)

    @property
    def amplitude(self) -> complex:
        return complex(self.values.sum())


def block_support(grid: FockGrid, k1: int, k2: int) -> np.ndarray:
    n_a = np.arange(grid.n_max_alpha + 1)[:, None]
    n_b = np.arange(grid.n_max_beta + 1)[None, :]
    m_a, m_b = n_a + k1, n_b + k2
    return (m_a >= 0) & (m_a <= grid.n_max_alpha) & (m_b >= 0) & (m_b <= grid.n_max_beta)


@dataclass(eq=False)
class PhotonDistribution:
    probabilities: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)

    @property
    def n_max(self) -> int:
        return len(self.probabilities) - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(len(self.probabilities), dtype=np.float64)

    @property
    def tail(self) -> float:
        return float(self.probabilities[-1])

    @property
    def mean(self) -> float:
        return moments(self)[0]

    def total_variation(self, other: "PhotonDistribution") -> float:
        size = max(len(self.probabilities), len(other.probabilities))
        a = np.pad(self.probabilities, (0, size - len(self.probabilities)))
        b = np.pad(other.probabilities, (0, size - len(other.probabilities)))
        return 0.5 * float(np.abs(a - b).sum())


def new_vacuum(grid: FockGrid) -> DiagonalState:
    values = np.zeros(grid.shape, dtype=np.float64)
    values[0, 0] = 1.0
    return DiagonalState(grid, values)


def clamp_negative(values: np.ndarray, what: str = "state") -> np.ndarray:
    low = float(values.min()) if values.size else 0.0
    if low < -NEGATIVITY_TOLERANCE:
        warn_physics(f"{what} has negative entries down to {low:.3e}; clamped to zero", logger)
    return np.clip(values, 0.0, None)


def marginal(state: DiagonalState, mode: Mode) -> PhotonDistribution:
    trace = state.trace
    if abs(trace - 1.0) > MARGINAL_TRACE_TOLERANCE:
        raise SolverError(f"state trace {trace:.12g} deviates from 1 by more than {MARGINAL_TRACE_TOLERANCE}")
    if mode == "alpha":
        p = state.values.sum(axis=1)
    elif mode == "beta":
        p = state.values.sum(axis=0)
    else:
        raise ValueError(f"mode '{mode}' unknown.")
    p = clamp_negative(p, f"marginal {mode}")
    return PhotonDistribution(p / p.sum())


def moments(dist: PhotonDistribution) -> Tuple[float, float]:
    n, p = dist.n, dist.probabilities
    return float(np.dot(n, p)), float(np.dot(n * n, p))


def distribution_from_log_weights(log_w: np.ndarray) -> PhotonDistribution:
    w = np.exp(log_w - log_w.max())
    return PhotonDistribution(w / w.sum())


def suggest_grid(coeffs: DerivedCoeffs) -> FockGrid:
    nbar_est = 0.0
    if coeffs.A > coeffs.C1_tilde and coeffs.B > 0:
        nbar_est = coeffs.A_tilde / coeffs.B * (coeffs.A / coeffs.C1_tilde - 1.0)
    n_max_alpha = math.ceil(nbar_est + 10.0 * math.sqrt(nbar_est + 1.0) + 20.0)
    return FockGrid(n_max_alpha, DEFAULT_N_MAX_BETA)


def product_state(grid: FockGrid, p_alpha: PhotonDistribution, p_beta: PhotonDistribution) -> DiagonalState:
    pa = np.zeros(grid.n_max_alpha + 1)
    pb = np.zeros(grid.n_max_beta + 1)
    na, nb = min(len(pa), len(p_alpha.probabilities)), min(len(pb), len(p_beta.probabilities))
    pa[:na] = p_alpha.probabilities[:na]
    pb[:nb] = p_beta.probabilities[:nb]
    return DiagonalState(grid, np.outer(pa, pb)).normalized()


def full_density_matrix(diagonal: DiagonalState, *blocks: CoherenceBlock) -> np.ndarray:
    """Dense rho on the flattened grid from the diagonal and stored blocks."""
    grid = diagonal.grid
    rho = np.zeros((grid.size, grid.size), dtype=np.complex128)
    idx = np.arange(grid.size)
    rho[idx, idx] = diagonal.values.ravel()
    n_a, n_b = np.nonzero(np.ones(grid.shape, dtype=bool))
    for block in blocks:
        if block.k1 == 0 and block.k2 == 0:
            continue
        mask = block.support_mask()[n_a, n_b]
        rows = grid.index(n_a[mask], n_b[mask])
        cols = grid.index(n_a[mask] + block.k1, n_b[mask] + block.k2)
        vals = block.values[n_a[mask], n_b[mask]]
        rho[rows, cols] = vals
        rho[cols, rows] = np.conj(vals)
    return rho
