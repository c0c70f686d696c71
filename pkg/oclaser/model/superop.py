from dataclasses import dataclass, field
from typing import Literal, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.special import roots_laguerre

from .config import Config
from .params import LaserParams, DerivedCoeffs, composite_transform, derive_coeffs
from .fock import FockGrid, DiagonalState, CoherenceBlock
from ..utils.common import get_logger
from ..utils.errors import GridTooSmallError, ConvergenceError

logger = get_logger(__name__)

State = Union[DiagonalState, CoherenceBlock]

OVERFLOW_TOLERANCE = 1e-10
SINC_SERIES_THRESHOLD = 1e-4


@dataclass(eq=False)
class KickOperators:
    """
    Eigenvalues of the operator functions entering one atom passage of length tau.
    phi[n] belongs to the raised index (alpha alpha^dagger), phi_prime[n] to n itself.
    """
    tau: float
    phi: np.ndarray = field(repr=False)
    phi_prime: np.ndarray = field(repr=False)
    cos: np.ndarray = field(repr=False)
    sin_over_phi: np.ndarray = field(repr=False)


def sin_over_phi(phi: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """sin(phi tau) / phi, with the series expansion near phi tau = 0."""
    x = phi * tau
    small = np.abs(x) < SINC_SERIES_THRESHOLD
    safe_phi = np.where(small, 1.0, phi)
    x2 = x * x
    series = tau * (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
    return np.where(small, series, np.sin(x) / safe_phi)


def kick_operators(n_max: int, g: float, delta: float, tau: float) -> KickOperators:
    n = np.arange(n_max + 1, dtype=np.float64)
    phi = np.sqrt(g * g * (n + 1.0) + 0.25 * delta * delta)
    phi_prime = np.sqrt(g * g * n + 0.25 * delta * delta)
    return KickOperators(
        tau=tau, phi=phi, phi_prime=phi_prime,
        cos=np.cos(phi * tau), sin_over_phi=sin_over_phi(phi, tau)
    )


def _block_layout(state: State) -> Tuple[np.ndarray, int, np.ndarray]:
    if isinstance(state, DiagonalState):
        return state.values.astype(np.complex128), 0, np.ones(state.grid.shape, dtype=bool)
    return state.values, state.k1, state.support_mask()


def _rebuild(state: State, values: np.ndarray) -> State:
    if isinstance(state, DiagonalState):
        return DiagonalState(state.grid, values.real)
    return CoherenceBlock(state.grid, state.k1, state.k2, values)


def lambda_kick(state: State, coeffs: DerivedCoeffs, tau: float) -> State:
    """
    Field state after one excited atom crossed the cavity during tau and was traced out.
    Acts on the alpha index only; the beta index is a spectator.
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    grid = state.grid
    values, k1, support = _block_layout(state)
    top = grid.n_max_alpha - k1
    if np.abs(values[top]).max() > OVERFLOW_TOLERANCE:
        raise GridTooSmallError(
            f"alpha level {top} holds {np.abs(values[top]).max():.3e} before the kick; "
            f"grid {grid.n_max_alpha} too small",
            mode="alpha"
        )

    delta = coeffs.delta_bar
    ops = kick_operators(grid.n_max_alpha + k1 + 1, coeffs.g, delta, tau)
    n = np.arange(grid.n_max_alpha + 1)
    m = n + k1
    phi_minus = ops.cos[n] - 0.5j * delta * ops.sin_over_phi[n]
    phi_plus = ops.cos[m] + 0.5j * delta * ops.sin_over_phi[m]

    out = (phi_minus * phi_plus)[:, None] * values
    # emission feeds (n - 1, m - 1) -> (n, m); sin/phi evaluated at the lowered index
    feed = np.zeros(grid.n_max_alpha + 1, dtype=np.float64)
    nn, mm = n[1:], m[1:]
    feed[1:] = coeffs.g ** 2 * np.sqrt(nn * mm) * ops.sin_over_phi[nn - 1] * ops.sin_over_phi[mm - 1]
    out[1:] += feed[1:, None] * values[:-1]
    return _rebuild(state, out * support)


@dataclass(eq=False)
class GainKernel:
    """
    Gain contribution for one alpha offset k1: feed[n] multiplies the entry at
    n - 1 and self_term[n] the entry at n, both with m = n + k1.
    """
    k1: int
    feed: np.ndarray = field(repr=False)
    self_term: np.ndarray = field(repr=False)
    provenance: Literal["closed_form", "quadrature"] = "closed_form"
    order: int = 0

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = self.self_term[:, None] * values
        out[1:] += self.feed[1:, None] * values[:-1]
        return out


def gain_kernel_closed_form(coeffs: DerivedCoeffs, k1: int, n_max: int) -> GainKernel:
    A, d2 = coeffs.A, coeffs.delta_bar ** 2
    half_ratio = 0.5 * coeffs.b_over_a
    quarter_sq = (0.25 * coeffs.b_over_a) ** 2 * k1 * k1
    n = np.arange(n_max + 1, dtype=np.float64)
    m = n + k1
    feed = A * np.sqrt(n * m) / (1.0 + d2 + half_ratio * (n + m) + quarter_sq)
    num = 0.5 * A * (n + m + 2.0) - 0.5j * A * coeffs.delta_bar * k1 + coeffs.B * k1 * k1 / 8.0
    self_term = -num / (1.0 + d2 + half_ratio * (n + m + 2.0) + quarter_sq)
    return GainKernel(k1=k1, feed=feed, self_term=self_term.astype(np.complex128), provenance="closed_form")


def _quadrature_tables(coeffs: DerivedCoeffs, k1: int, n_max: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_laguerre(order)
    rate = coeffs.pump_rate
    g2, delta = coeffs.g ** 2, coeffs.delta_bar
    n = np.arange(n_max + 1, dtype=np.float64)
    m = n + k1
    tau = x[None, :]
    phi_n = np.sqrt(g2 * (n + 1.0) + 0.25 * delta * delta)[:, None]
    phi_m = np.sqrt(g2 * (m + 1.0) + 0.25 * delta * delta)[:, None]
    s_n, s_m = sin_over_phi(phi_n, tau), sin_over_phi(phi_m, tau)
    phi_minus = np.cos(phi_n * tau) - 0.5j * delta * s_n
    phi_plus = np.cos(phi_m * tau) + 0.5j * delta * s_m
    self_term = rate * ((phi_minus * phi_plus - 1.0) @ w)

    # lowered indices for the emission term
    phi_nl = np.sqrt(g2 * n + 0.25 * delta * delta)[:, None]
    phi_ml = np.sqrt(g2 * m + 0.25 * delta * delta)[:, None]
    emission = sin_over_phi(phi_nl, tau) * sin_over_phi(phi_ml, tau)
    feed = rate * g2 * np.sqrt(n * m) * (emission @ w)
    return feed, self_term


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.maximum(np.abs(new), 1e-14 * max(float(np.abs(new).max()), 1e-300))
    return float((np.abs(new - old) / scale).max())


def gain_kernel_quadrature(coeffs: DerivedCoeffs, k1: int, n_max: int) -> GainKernel:
    """
    Averages the kick over exponentially distributed passage times with
    Gauss-Laguerre rules, doubling the order until the tables settle.
    """
    order = Config.quad_min_order
    feed, self_term = _quadrature_tables(coeffs, k1, n_max, order)
    while True:
        next_order = 2 * order
        if next_order > Config.quad_max_order:
            raise ConvergenceError(
                f"gain quadrature did not settle to {Config.quad_rtol:g} by order {order} "
                f"(n_max={n_max}, k1={k1})"
            )
        new_feed, new_self = _quadrature_tables(coeffs, k1, n_max, next_order)
        change = max(_relative_change(new_feed, feed), _relative_change(new_self, self_term))
        logger.debug(f"gain quadrature order {next_order}: relative change {change:.3e}")
        feed, self_term, order = new_feed, new_self, next_order
        if change < Config.quad_rtol:
            break
    return GainKernel(k1=k1, feed=feed, self_term=self_term, provenance="quadrature", order=order)


def gain_quadrature(state: State, coeffs: DerivedCoeffs) -> np.ndarray:
    """Time derivative contributed by the pump, averaged over passage times numerically."""
    values, k1, support = _block_layout(state)
    if coeffs.A == 0:
        return np.zeros_like(state.values)
    kernel = gain_kernel_quadrature(coeffs, k1, state.grid.n_max_alpha)
    out = kernel.apply(values) * support
    if isinstance(state, DiagonalState):
        return out.real
    return out


def _annihilation(n_max: int) -> sparse.csr_matrix:
    return sparse.diags(np.sqrt(np.arange(1, n_max + 1, dtype=np.float64)), 1, format="csr")


def bare_operators(grid: FockGrid) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Annihilators of bare modes 1 and 2; grid cutoffs are read as (mode 1, mode 2)."""
    a = _annihilation(grid.n_max_alpha)
    b = _annihilation(grid.n_max_beta)
    a1 = sparse.kron(a, sparse.identity(grid.n_max_beta + 1), format="csr")
    a2 = sparse.kron(sparse.identity(grid.n_max_alpha + 1), b, format="csr")
    return a1, a2


def loss_apply_bare(rho: np.ndarray, grid: FockGrid, params: LaserParams) -> np.ndarray:
    """
    Cavity loss through the common bath acting on a dense bare-mode density
    matrix: sum over l, l' of gamma[l, l'] (2 a_l' rho a_l^+ - rho a_l^+ a_l' - a_l^+ a_l' rho).
    """
    ops = bare_operators(grid)
    gamma = params.damping_matrix
    out = np.zeros_like(rho, dtype=np.complex128)
    for l in range(2):
        a_l_dag = ops[l].conj().T
        for lp in range(2):
            if gamma[l, lp] == 0:
                continue
            a_lp = ops[lp]
            jump = a_lp @ (a_l_dag.T @ rho.T).T
            number = a_l_dag @ a_lp
            out += gamma[l, lp] * (2.0 * jump - (number.T @ rho.T).T - number @ rho)
    return out


def rotate_loss_to_composite(params: LaserParams) -> Tuple[float, float, float]:
    """Damping matrix in the composite basis: (c_aa, c_bb, c_ab)."""
    o = composite_transform(params).matrix
    rotated = o @ params.damping_matrix @ o.T
    c_aa, c_bb, c_ab = float(rotated[0, 0]), float(rotated[1, 1]), float(rotated[0, 1])
    C3 = derive_coeffs(params).C3
    if not np.isclose(2.0 * c_ab, C3, rtol=1e-12, atol=1e-12):
        logger.info(f"rotated cross damping 2*c_ab = {2.0 * c_ab:.6g} differs from C3 = {C3:.6g}")
    return c_aa, c_bb, c_ab
