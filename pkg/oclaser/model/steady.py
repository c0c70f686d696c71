from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from .config import Config
from .params import DerivedCoeffs
from .fock import (
    FockGrid, DiagonalState, PhotonDistribution,
    clamp_negative, distribution_from_log_weights, marginal, moments, suggest_grid
)
from ..utils.common import get_logger, count_time_usage
from ..utils.errors import (
    DegenerateRegimeError, GridTooSmallError, NonNormalizableError, ConvergenceError,
    DegenerateSteadyStateError, ParameterError, SolverError, warn_physics
)

logger = get_logger(__name__)

BetaMode = Literal["recurrence", "vacuum", "auto"]

ORACLE_MAX_SIZE = 200_000
DEGENERACY_RATIO = 1e-10


class KMTable:
    """
    Evaluates the M and K denominators of the C3-squared terms at real arguments.
    Every query with M <= 0 is a degenerate regime.
    """

    def __init__(self, coeffs: DerivedCoeffs) -> "KMTable":
        self.coeffs = coeffs

    def _saturation_denominator(self, n_alpha: np.ndarray) -> np.ndarray:
        c = self.coeffs
        ratio = c.b_over_a
        return 1.0 + c.delta_bar ** 2 + ratio * (n_alpha + 0.5) + (0.25 * ratio) ** 2

    def m(self, n_alpha, n_beta) -> np.ndarray:
        c = self.coeffs
        n_alpha = np.asarray(n_alpha, dtype=np.float64)
        n_beta = np.asarray(n_beta, dtype=np.float64)
        gain = (c.A * (n_alpha + 0.5) + 0.25 * c.B) / self._saturation_denominator(n_alpha)
        m = gain + c.C1 * (n_alpha - 0.5) + c.C2 * (n_beta - 0.5)
        bad = ~(m > 0)
        if np.any(bad):
            na, nb = np.broadcast_arrays(n_alpha, n_beta)
            i = np.flatnonzero(bad.ravel())[0] if np.ndim(bad) else 0
            raise DegenerateRegimeError(
                f"M({float(np.ravel(na)[i]):g}, {float(np.ravel(nb)[i]):g}) = "
                f"{float(np.ravel(m)[i]):.6g} <= 0"
            )
        return m

    def k(self, n_alpha, n_beta) -> np.ndarray:
        c = self.coeffs
        m = self.m(n_alpha, n_beta)
        den = self._saturation_denominator(np.asarray(n_alpha, dtype=np.float64))
        return m + (0.5 * c.delta_bar * c.A) ** 2 / den ** 2 / m

    def inverse(self, n_alpha, n_beta, where) -> np.ndarray:
        """1/K on the points selected by `where`, zero elsewhere."""
        n_alpha, n_beta, where = np.broadcast_arrays(
            np.asarray(n_alpha, dtype=np.float64), np.asarray(n_beta, dtype=np.float64), where
        )
        out = np.zeros(n_alpha.shape, dtype=np.float64)
        if np.any(where):
            out[where] = 1.0 / self.k(n_alpha[where], n_beta[where])
        return out


def k_factor(n_alpha: float, n_beta: float, coeffs: DerivedCoeffs) -> float:
    return float(KMTable(coeffs).k(n_alpha, n_beta))


@dataclass(eq=False)
class SelfConsistentSolution:
    p_alpha: PhotonDistribution
    p_beta: PhotonDistribution
    nbar_alpha: float
    nbar_beta: float
    iterations: int
    converged: bool
    grid: Optional[FockGrid] = None


@dataclass
class SteadyControls:
    tol: float = 1e-8
    max_iter: int = 200
    relaxation: float = 0.5
    tail_tol: float = 1e-8
    max_regrow: int = 3
    beta_mode: BetaMode = "recurrence"


def _check_tail(dist: PhotonDistribution, mode: str, tail_tol: float) -> PhotonDistribution:
    if dist.tail > tail_tol:
        raise GridTooSmallError(
            f"{mode} tail mass p({dist.n_max}) = {dist.tail:.3e} exceeds {tail_tol:g}",
            mode=mode, tail=dist.tail
        )
    return dist


def alpha_ratios(coeffs: DerivedCoeffs, nbar_beta: float, n: np.ndarray) -> np.ndarray:
    """p(n)/p(n-1) of the alpha recurrence for n >= 1."""
    c = coeffs
    num = c.A / (1.0 + c.delta_bar ** 2 + c.b_over_a * n)
    den = np.full_like(n, c.C1, dtype=np.float64)
    if c.C3 != 0:
        table = KMTable(c)
        c3sq = 2.0 * c.C3 ** 2
        inv_k_plus = table.inverse(n, nbar_beta + 1.0, True)
        inv_k = table.inverse(n, nbar_beta, nbar_beta > 0)
        num = num + c3sq * nbar_beta * inv_k
        den = den - c3sq * ((nbar_beta + 1.0) * inv_k_plus - 2.0 * nbar_beta * inv_k)
    bad = ~(den > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateRegimeError(
            f"alpha recurrence denominator {den[i]:.6g} <= 0 at n_alpha = {int(n[i])}"
        )
    return num / den


def solve_alpha_recurrence(
    coeffs: DerivedCoeffs, nbar_beta: float, grid: FockGrid, tail_tol: float = 1e-8
) -> PhotonDistribution:
    if nbar_beta < 0:
        raise ParameterError(f"nbar_beta must be non-negative, got {nbar_beta}")
    n = np.arange(1, grid.n_max_alpha + 1, dtype=np.float64)
    ratios = alpha_ratios(coeffs, nbar_beta, n)
    with np.errstate(divide="ignore"):
        log_w = np.concatenate([[0.0], np.cumsum(np.log(ratios))])
    return _check_tail(distribution_from_log_weights(log_w), "alpha", tail_tol)


def beta_ratios(coeffs: DerivedCoeffs, nbar_alpha: float, n: np.ndarray) -> np.ndarray:
    c = coeffs
    table = KMTable(c)
    c3sq = 2.0 * c.C3 ** 2
    inv_k = table.inverse(nbar_alpha, n, True)
    inv_k_plus = table.inverse(nbar_alpha + 1.0, n, True)
    num = c3sq * nbar_alpha * inv_k
    den = c.C2 - c3sq * ((nbar_alpha + 1.0) * inv_k_plus - 2.0 * nbar_alpha * inv_k)
    bad = ~(den > 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DegenerateRegimeError(
            f"beta recurrence denominator {den[i]:.6g} <= 0 at n_beta = {int(n[i])} "
            f"(unphysical damping, C2 = {c.C2:.6g})"
        )
    ratios = num / den
    if np.any(ratios >= 1.0):
        i = int(np.flatnonzero(ratios >= 1.0)[0])
        raise NonNormalizableError(
            f"beta recurrence ratio {ratios[i]:.6g} >= 1 at n_beta = {int(n[i])}"
        )
    return ratios


def solve_beta_recurrence(
    coeffs: DerivedCoeffs, nbar_alpha: float, grid: FockGrid, tail_tol: float = 1e-8
) -> PhotonDistribution:
    if nbar_alpha < 0:
        raise ParameterError(f"nbar_alpha must be non-negative, got {nbar_alpha}")
    p = np.zeros(grid.n_max_beta + 1)
    if coeffs.C3 == 0 or nbar_alpha == 0:
        p[0] = 1.0
        return PhotonDistribution(p)
    n = np.arange(1, grid.n_max_beta + 1, dtype=np.float64)
    ratios = beta_ratios(coeffs, nbar_alpha, n)
    with np.errstate(divide="ignore"):
        log_w = np.concatenate([[0.0], np.cumsum(np.log(ratios))])
    return _check_tail(distribution_from_log_weights(log_w), "beta", tail_tol)


def regime_beta_mode(coeffs: DerivedCoeffs) -> Tuple[DerivedCoeffs, BetaMode]:
    """
    Resolves the "auto" beta treatment from the coefficients alone, so every
    pump of a sweep that stays in one regime is solved the same way.

    - At or below threshold the mean-field factorization has no occupied
      lasing mode to lean on (the beta recurrence meets M <= 0 or ratios
      >= 1 there), and the modes are decoupled: C3 is dropped.
    - Above threshold with C2 <= 0 beta has no damping to balance its source
      and is held in vacuum.
    - Otherwise both recurrences run.
    """
    if coeffs.C3 == 0:
        return coeffs, "recurrence"
    if not coeffs.A > coeffs.C1_tilde:
        logger.debug(f"pump ratio {coeffs.pump_ratio:.6g} <= 1: alpha and beta decoupled")
        return replace(coeffs, C3=0.0), "recurrence"
    if coeffs.C2 <= 0:
        warn_physics(f"beta recurrence unusable (C2 = {coeffs.C2:.6g} <= 0); beta mode taken as vacuum", logger)
        return coeffs, "vacuum"
    return coeffs, "recurrence"


def _beta_step(
    coeffs: DerivedCoeffs, nbar_alpha: float, grid: FockGrid, mode: BetaMode, tail_tol: float
) -> PhotonDistribution:
    if mode == "vacuum":
        return solve_beta_recurrence(coeffs, 0.0, grid)
    return solve_beta_recurrence(coeffs, nbar_alpha, grid, tail_tol)


def self_consistent_solve(
    coeffs: DerivedCoeffs, grid: FockGrid, controls: Optional[SteadyControls] = None
) -> SelfConsistentSolution:
    """
    Damped fixed point on the mean beta photon number: the alpha recurrence is
    solved at the current nbar_beta, the beta recurrence at the resulting
    nbar_alpha, and nbar_beta is relaxed toward the new mean.
    """
    controls = controls or SteadyControls()
    mode = controls.beta_mode
    if mode == "auto":
        coeffs, mode = regime_beta_mode(coeffs)
    nbar_beta = 0.0
    for it in range(1, controls.max_iter + 1):
        p_alpha = solve_alpha_recurrence(coeffs, nbar_beta, grid, controls.tail_tol)
        nbar_alpha = moments(p_alpha)[0]
        p_beta = _beta_step(coeffs, nbar_alpha, grid, mode, controls.tail_tol)
        new_beta = moments(p_beta)[0]
        residual = abs(new_beta - nbar_beta)
        logger.debug(f"iteration {it}: nbar_alpha={nbar_alpha:.10g} nbar_beta={new_beta:.10g} residual={residual:.3e}")
        if residual < controls.tol * (1.0 + new_beta):
            if new_beta > 0:
                logger.info(
                    f"beta recurrence admits nbar_beta = {new_beta:.6g} "
                    f"(nbar_beta/nbar_alpha = {new_beta / max(nbar_alpha, 1e-300):.3e}), not strict vacuum"
                )
            return SelfConsistentSolution(
                p_alpha=p_alpha, p_beta=p_beta, nbar_alpha=nbar_alpha, nbar_beta=new_beta,
                iterations=it, converged=True, grid=grid
            )
        nbar_beta = nbar_beta + controls.relaxation * (new_beta - nbar_beta)
    raise ConvergenceError(
        f"mean-field iteration did not converge in {controls.max_iter} iterations "
        f"(last residual {residual:.3e})"
    )


def solve_steady(
    coeffs: DerivedCoeffs, grid: Optional[FockGrid] = None, controls: Optional[SteadyControls] = None
) -> SelfConsistentSolution:
    """self_consistent_solve with the regrow-and-retry truncation policy."""
    controls = controls or SteadyControls()
    grid = grid or suggest_grid(coeffs)
    for attempt in range(controls.max_regrow + 1):
        try:
            return self_consistent_solve(coeffs, grid, controls)
        except GridTooSmallError as e:
            if attempt == controls.max_regrow:
                raise
            grid = grid.grow(e.mode)
            logger.info(f"{e}; retrying on grid ({grid.n_max_alpha}, {grid.n_max_beta})")


def _degeneracy_check(matrix: sparse.spmatrix) -> None:
    s = np.linalg.svd(matrix.toarray(), compute_uv=False)
    s = np.sort(s)
    if s.size > 1 and s[1] < DEGENERACY_RATIO * s[-1]:
        raise DegenerateSteadyStateError(
            f"generator has a degenerate null space: second singular value {s[1]:.3e}, norm {s[-1]:.3e}"
        )


def _condition_check(system: sparse.csc_matrix, lu) -> None:
    """
    Degeneracy test for generators too large for a dense SVD. A second null
    vector of the generator makes the trace-augmented system singular, which
    shows up as a 1-norm condition estimate beyond 1 / DEGENERACY_RATIO.
    """
    n = system.shape[0]
    inverse = LinearOperator(
        (n, n), matvec=lu.solve, rmatvec=lambda b: lu.solve(b, trans="T"), dtype=np.float64
    )
    cond = float(abs(system).sum(axis=0).max()) * float(onenormest(inverse))
    logger.debug(f"trace-augmented system condition estimate {cond:.3e} on {n} states")
    if not cond < 1.0 / DEGENERACY_RATIO:
        raise DegenerateSteadyStateError(
            f"generator has a degenerate null space: condition estimate {cond:.3e} of the trace-augmented system"
        )


def liouvillian_null_vector(coeffs: DerivedCoeffs, grid: FockGrid) -> np.ndarray:
    """Unit-trace null vector of the diagonal generator, before any clamping."""
    # the generator lives in dynamics, which depends on this module
    from .dynamics import build_diag_generator

    if grid.size > ORACLE_MAX_SIZE:
        raise ParameterError(f"grid of {grid.size} states too large for the direct oracle (max {ORACLE_MAX_SIZE})")
    matrix = build_diag_generator(grid, coeffs).matrix.tocsr()
    if grid.size <= Config.dense_limit:
        _degeneracy_check(matrix)

    # replace the vacuum equation by the trace condition
    system = matrix.tolil()
    system[0, :] = np.ones(grid.size)
    system = system.tocsc()
    rhs = np.zeros(grid.size)
    rhs[0] = 1.0
    try:
        lu = splu(system)
    except RuntimeError as e:
        raise DegenerateSteadyStateError(f"sparse factorization failed: {e}") from e
    if grid.size > Config.dense_limit:
        _condition_check(system, lu)
    x = lu.solve(rhs)
    logger.debug(f"oracle residual {np.abs(matrix @ x).sum():.3e} on {grid.size} states")
    return x / x.sum()


@count_time_usage
def liouvillian_steady_oracle(coeffs: DerivedCoeffs, grid: FockGrid) -> DiagonalState:
    x = clamp_negative(liouvillian_null_vector(coeffs, grid), "oracle steady state")
    return DiagonalState(grid, x / x.sum())


@dataclass(eq=False)
class SteadyResult:
    p_alpha: PhotonDistribution
    p_beta: PhotonDistribution
    nbar_alpha: float
    nbar_beta: float
    grid: FockGrid
    solver: str
    iterations: int = 0
    converged: bool = True
    state: Optional[DiagonalState] = field(default=None, repr=False)

    @classmethod
    def from_state(cls, state: DiagonalState, solver: str) -> "SteadyResult":
        p_alpha, p_beta = marginal(state, "alpha"), marginal(state, "beta")
        return cls(
            p_alpha=p_alpha, p_beta=p_beta,
            nbar_alpha=moments(p_alpha)[0], nbar_beta=moments(p_beta)[0],
            grid=state.grid, solver=solver, state=state
        )


class RecurrenceSteadySolver:

    def __init__(
        self, tol: float = 1e-8, max_iter: int = 200, relaxation: float = 0.5,
        beta_mode: BetaMode = "recurrence", max_regrow: int = 3
    ) -> "RecurrenceSteadySolver":
        self.controls = SteadyControls(
            tol=tol, max_iter=max_iter, relaxation=relaxation,
            beta_mode=beta_mode, max_regrow=max_regrow
        )

    def solve(self, coeffs: DerivedCoeffs, grid: Optional[FockGrid] = None) -> SteadyResult:
        sol = solve_steady(coeffs, grid, self.controls)
        return SteadyResult(
            p_alpha=sol.p_alpha, p_beta=sol.p_beta, nbar_alpha=sol.nbar_alpha, nbar_beta=sol.nbar_beta,
            grid=sol.grid, solver="recurrence", iterations=sol.iterations, converged=sol.converged
        )


class LiouvillianSteadySolver:

    def solve(self, coeffs: DerivedCoeffs, grid: Optional[FockGrid] = None) -> SteadyResult:
        grid = grid or suggest_grid(coeffs)
        return SteadyResult.from_state(liouvillian_steady_oracle(coeffs, grid), "liouvillian")


SteadySolver = Union[RecurrenceSteadySolver, LiouvillianSteadySolver]
