from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union, Literal

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp

from .config import Config, BoundaryMode
from .params import DerivedCoeffs
from .fock import (
    FockGrid, DiagonalState, CoherenceBlock, PhotonDistribution,
    new_vacuum, block_support, suggest_grid
)
from .superop import gain_kernel_closed_form
from .steady import KMTable, SteadyResult
from ..utils.common import get_logger, count_time_usage
from ..utils.errors import (
    ConvergenceError, TraceDriftError, FitError, ParameterError
)

logger = get_logger(__name__)

State = Union[DiagonalState, CoherenceBlock]

# (d_alpha, d_beta) of the source relative to the target, per rate term
DIAG_OFFSETS = {
    "gain_in": (-1, 0),
    "pair": (1, 1),
    "shift_up": (1, -1),
    "shift_down": (-1, 1),
    "loss_alpha": (1, 0),
    "loss_beta": (0, 1),
}


def _assemble(grid: FockGrid, terms: Dict[str, np.ndarray], offsets: Dict[str, Tuple[int, int]],
              diagonal: np.ndarray, dtype=np.float64) -> sparse.csr_matrix:
    na, nb = grid.shape
    n_a, n_b = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
    rows, cols, vals = [np.arange(grid.size)], [np.arange(grid.size)], [diagonal.ravel()]
    for name, coeff in terms.items():
        da, db = offsets[name]
        s_a, s_b = n_a + da, n_b + db
        inside = (s_a >= 0) & (s_a < na) & (s_b >= 0) & (s_b < nb) & (coeff != 0)
        rows.append(grid.index(n_a[inside], n_b[inside]))
        cols.append(grid.index(s_a[inside], s_b[inside]))
        vals.append(coeff[inside])
    return sparse.coo_matrix(
        (np.concatenate(vals).astype(dtype), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size)
    ).tocsr()


def _reflecting_diagonal(matrix: sparse.csr_matrix) -> np.ndarray:
    off = matrix - sparse.diags(matrix.diagonal())
    return -np.asarray(off.sum(axis=0)).ravel()


@dataclass(eq=False)
class GeneratorDiag:
    """
    Rate equations of the photon-number probabilities. terms[name][n_a, n_b]
    multiplies the source at the offset DIAG_OFFSETS[name]; self_term is the
    printed diagonal. matrix acts on the flattened grid (row = target).
    """
    grid: FockGrid
    coeffs: DerivedCoeffs
    terms: Dict[str, np.ndarray] = field(repr=False)
    self_term: np.ndarray = field(repr=False)
    matrix: sparse.csr_matrix = field(repr=False)
    boundary: BoundaryMode = BoundaryMode.REFLECTING

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.ravel(values)).reshape(self.grid.shape)


def diag_rate_tables(grid: FockGrid, coeffs: DerivedCoeffs) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    c = coeffs
    na, nb = grid.shape
    n, m = np.meshgrid(np.arange(na, dtype=np.float64), np.arange(nb, dtype=np.float64), indexing="ij")
    sat = 1.0 + c.delta_bar ** 2

    def gain(k):
        return c.A * k / (sat + c.b_over_a * k)

    zero = np.zeros_like(n)
    shift_up, shift_down, pair = zero, zero, zero
    corr_a, corr_b = zero, zero
    if c.C3 != 0:
        table = KMTable(c)
        c3sq = c.C3 ** 2
        inv_up = table.inverse(n + 1.0, m, m > 0)           # K(n+1, m)
        inv_down = table.inverse(n, m + 1.0, n > 0)         # K(n, m+1)
        inv_pair = table.inverse(n + 1.0, m + 1.0, True)    # K(n+1, m+1)
        shift_up = 2.0 * c3sq * (n + 1.0) * m * inv_up
        shift_down = 2.0 * c3sq * n * (m + 1.0) * inv_down
        pair = 8.0 * c3sq * (n + 1.0) * (m + 1.0) * inv_pair
        corr_a = 4.0 * c3sq * (n + 1.0) * (m + 1.0) * inv_pair + 4.0 * c3sq * (n + 1.0) * m * inv_up
        corr_b = 4.0 * c3sq * (n + 1.0) * (m + 1.0) * inv_pair + 4.0 * c3sq * n * (m + 1.0) * inv_down

    terms = {
        "gain_in": gain(n),
        "pair": pair,
        "shift_up": shift_up,
        "shift_down": shift_down,
        "loss_alpha": c.C1 * (n + 1.0) - corr_a,
        "loss_beta": c.C2 * (m + 1.0) - corr_b,
    }
    self_term = -(gain(n + 1.0) + c.C1 * n + c.C2 * m) + shift_up + shift_down
    return terms, self_term


def build_diag_generator(
    grid: FockGrid, coeffs: DerivedCoeffs, boundary: Optional[BoundaryMode] = None
) -> GeneratorDiag:
    boundary = boundary or Config.boundary
    terms, self_term = diag_rate_tables(grid, coeffs)
    matrix = _assemble(grid, terms, DIAG_OFFSETS, self_term)
    if boundary == BoundaryMode.REFLECTING:
        # flow leaving the grid is kept on the source, so every column sums to zero
        matrix = (matrix - sparse.diags(matrix.diagonal()) + sparse.diags(_reflecting_diagonal(matrix))).tocsr()
    return GeneratorDiag(grid=grid, coeffs=coeffs, terms=terms, self_term=self_term, matrix=matrix, boundary=boundary)


COHERENCE_OFFSETS = {
    "gain_in": (-1, 0),
    "loss_alpha": (1, 0),
    "loss_beta": (0, 1),
}


@dataclass(eq=False)
class GeneratorCoherence:
    """
    Evolution of one coherence block. Couplings to the neighbouring blocks
    (k1 +- 1, k2 -+ 1) through C3 are not part of a single-block generator.
    """
    grid: FockGrid
    coeffs: DerivedCoeffs
    k1: int
    k2: int
    terms: Dict[str, np.ndarray] = field(repr=False)
    self_term: np.ndarray = field(repr=False)
    matrix: sparse.csr_matrix = field(repr=False)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.ravel(values)).reshape(self.grid.shape)


def build_coherence_generator(
    grid: FockGrid, coeffs: DerivedCoeffs, k1: int, k2: int, boundary: Optional[BoundaryMode] = None
) -> GeneratorCoherence:
    if abs(k1) > grid.n_max_alpha or abs(k2) > grid.n_max_beta:
        raise ParameterError(f"offset ({k1}, {k2}) exceeds grid ({grid.n_max_alpha}, {grid.n_max_beta})")
    if not (k1 > 0 or (k1 == 0 and k2 >= 0)):
        raise ParameterError(f"offset ({k1}, {k2}) is the conjugate of a stored block")
    c = coeffs
    na, nb = grid.shape
    n, nbeta = np.meshgrid(np.arange(na, dtype=np.float64), np.arange(nb, dtype=np.float64), indexing="ij")
    m, mbeta = n + k1, nbeta + k2
    kernel = gain_kernel_closed_form(c, k1, grid.n_max_alpha)
    support = block_support(grid, k1, k2)

    terms = {
        "gain_in": kernel.feed[:, None] * np.ones((1, nb)),
        "loss_alpha": c.C1 * np.sqrt((n + 1.0) * (m + 1.0)),
        "loss_beta": c.C2 * np.sqrt((nbeta + 1.0) * np.clip(mbeta + 1.0, 0.0, None)),
    }
    terms = {name: np.where(support, t, 0.0).astype(np.complex128) for name, t in terms.items()}
    self_term = kernel.self_term[:, None] - 0.5 * c.C1 * (n + m) - 0.5 * c.C2 * (nbeta + mbeta)
    self_term = np.where(support, self_term, 0.0)

    # sources outside the block support are identically zero
    for name, (da, db) in COHERENCE_OFFSETS.items():
        src_ok = np.zeros_like(support)
        rows = slice(max(-da, 0), na - max(da, 0))
        cols = slice(max(-db, 0), nb - max(db, 0))
        src_ok[rows, cols] = support[max(da, 0):na - max(-da, 0), max(db, 0):nb - max(-db, 0)]
        terms[name] = np.where(src_ok, terms[name], 0.0)

    matrix = _assemble(grid, terms, COHERENCE_OFFSETS, self_term, dtype=np.complex128)
    boundary = boundary or Config.boundary
    if k1 == 0 and k2 == 0 and boundary == BoundaryMode.REFLECTING:
        matrix = (matrix - sparse.diags(matrix.diagonal()) + sparse.diags(_reflecting_diagonal(matrix))).tocsr()
    return GeneratorCoherence(grid=grid, coeffs=c, k1=k1, k2=k2, terms=terms, self_term=self_term, matrix=matrix)


Generator = Union[GeneratorDiag, GeneratorCoherence]


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray = field(repr=False)
    columns: Dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64)
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError("trajectory times must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def amplitude(self) -> np.ndarray:
        return self.columns["amplitude_re"] + 1j * self.columns["amplitude_im"]


@dataclass
class IntegrationControls:
    rtol: float = 1e-8
    atol: float = 1e-12
    method: Literal["RK45", "DOP853", "BDF", "LSODA"] = "RK45"
    n_samples: int = 101
    trace_tolerance: float = 1e-9


def _observe(generator: Generator, y: np.ndarray) -> Dict[str, np.ndarray]:
    grid = generator.grid
    values = y.reshape(grid.shape + y.shape[1:])
    if isinstance(generator, GeneratorDiag):
        n_a = np.arange(grid.n_max_alpha + 1, dtype=np.float64)
        n_b = np.arange(grid.n_max_beta + 1, dtype=np.float64)
        values = values.real
        return {
            "trace": values.sum(axis=(0, 1)),
            "nbar_alpha": np.einsum("i,ij...->...", n_a, values),
            "nbar_beta": np.einsum("j,ij...->...", n_b, values),
            "p00": values[0, 0],
        }
    s = values.sum(axis=(0, 1))
    return {"amplitude_re": s.real, "amplitude_im": s.imag, "amplitude_abs": np.abs(s)}


def _wrap(generator: Generator, y: np.ndarray) -> State:
    if isinstance(generator, GeneratorDiag):
        return DiagonalState(generator.grid, y.real)
    return CoherenceBlock(generator.grid, generator.k1, generator.k2, y)


def integrate(
    generator: Generator, initial: State, t_end: float, controls: Optional[IntegrationControls] = None
) -> Tuple[Trajectory, State]:
    controls = controls or IntegrationControls()
    if initial.grid != generator.grid:
        raise ParameterError(f"state grid {initial.grid} does not match generator grid {generator.grid}")
    diag = isinstance(generator, GeneratorDiag)
    dtype = np.float64 if diag else np.complex128
    y0 = np.ravel(initial.values).astype(dtype)
    matrix = generator.matrix.astype(dtype)
    times = np.linspace(0.0, t_end, max(controls.n_samples, 2))

    jac = matrix if controls.method in ("BDF", "Radau", "LSODA") else None
    sol = solve_ivp(
        lambda t, y: matrix @ y, (0.0, t_end), y0, method=controls.method, t_eval=times,
        rtol=controls.rtol, atol=controls.atol, jac=jac
    )
    if sol.status != 0:
        raise ConvergenceError(f"integration failed at t = {sol.t[-1] if sol.t.size else 0.0:.6g}: {sol.message}")
    columns = _observe(generator, sol.y)
    if diag:
        drift = float(np.abs(columns["trace"] - y0.sum()).max())
        if drift > controls.trace_tolerance:
            raise TraceDriftError(f"trace drifted by {drift:.3e} (> {controls.trace_tolerance:g}) on grid {generator.grid}")
    return Trajectory(sol.t, columns), _wrap(generator, sol.y[:, -1])


def _slowest_rate(coeffs: DerivedCoeffs) -> float:
    rates = [r for r in (coeffs.C1, coeffs.C2, 1.0) if r > 0]
    return min(rates)


@count_time_usage
def steady_by_integration(
    generator: GeneratorDiag, grid: FockGrid, controls: Optional[IntegrationControls] = None,
    residual_tol: float = 1e-8
) -> DiagonalState:
    """
    Integrates from vacuum in doubling segments until |L p| falls below
    residual_tol in units of the 1-norm of L.
    """
    controls = controls or IntegrationControls(n_samples=2)
    state = new_vacuum(grid)
    scale = float(np.abs(generator.matrix).sum(axis=0).max()) or 1.0
    slowest = _slowest_rate(generator.coeffs)
    t_max = 1e6 / slowest
    segment, elapsed = 10.0 / slowest, 0.0
    while True:
        residual = np.abs(generator.apply(state.values)).sum() / (scale * np.abs(state.values).sum())
        logger.debug(f"t = {elapsed:.6g}: residual {residual:.3e}")
        if residual < residual_tol:
            return state.normalized()
        if elapsed >= t_max:
            raise ConvergenceError(f"no steady state by t = {elapsed:.6g} (residual {residual:.3e})")
        _, state = integrate(generator, state, segment, controls)
        elapsed += segment
        segment *= 2.0


class IntegrationSteadySolver:

    def __init__(self, rtol: float = 1e-8, atol: float = 1e-12, method: str = "RK45") -> "IntegrationSteadySolver":
        self.controls = IntegrationControls(rtol=rtol, atol=atol, method=method, n_samples=2)

    def solve(self, coeffs: DerivedCoeffs, grid: Optional[FockGrid] = None) -> SteadyResult:
        grid = grid or suggest_grid(coeffs)
        generator = build_diag_generator(grid, coeffs)
        return SteadyResult.from_state(steady_by_integration(generator, grid, self.controls), "integration")


def seed_coherence_block(
    grid: FockGrid, p_alpha: PhotonDistribution, p_beta: PhotonDistribution, k1: int, k2: int
) -> CoherenceBlock:
    """sqrt(p(n) p(n + k)) built from the product of the steady marginals."""
    pa = np.zeros(grid.n_max_alpha + 1 + abs(k1))
    pb = np.zeros(grid.n_max_beta + 1 + abs(k2))
    la = min(len(p_alpha.probabilities), grid.n_max_alpha + 1)
    lb = min(len(p_beta.probabilities), grid.n_max_beta + 1)
    pa[:la] = p_alpha.probabilities[:la]
    pb[:lb] = p_beta.probabilities[:lb]
    n_a = np.arange(grid.n_max_alpha + 1)
    n_b = np.arange(grid.n_max_beta + 1)
    amp_a = np.sqrt(pa[n_a] * pa[np.clip(n_a + k1, 0, None)])
    amp_b = np.sqrt(pb[n_b] * pb[np.clip(n_b + k2, 0, None)])
    return CoherenceBlock(grid, k1, k2, np.outer(amp_a, amp_b).astype(np.complex128))


FIT_WINDOW = (1e-3, 0.5)


def fit_decay(block_trajectory: Trajectory, k1: int, k2: int) -> Tuple[float, float]:
    """
    Least-squares decay rate of |S(t)| and oscillation frequency of the field,
    S being the summed block amplitude. The frequency is minus the phase slope
    of S, the block being the conjugate of the field expectation.
    """
    t = block_trajectory.times
    s = block_trajectory.amplitude
    s0 = abs(s[0])
    if s0 == 0:
        raise FitError("block amplitude is zero at t = 0")
    if k1 == 0 and k2 == 0:
        window = np.ones_like(t, dtype=bool)
    else:
        ratio = np.abs(s) / s0
        window = (ratio >= FIT_WINDOW[0]) & (ratio <= FIT_WINDOW[1])
    if window.sum() < 3:
        raise FitError(
            f"fit window |S| in {FIT_WINDOW} x |S(0)| holds {int(window.sum())} samples; "
            f"extend t_end or refine sampling"
        )
    tw = t[window]
    rate = -np.polyfit(tw, np.log(np.abs(s[window])), 1)[0]
    phase = np.unwrap(np.angle(s))[window]
    frequency = -np.polyfit(tw, phase, 1)[0]
    return float(rate), float(frequency)


def marginal_rates(state: DiagonalState, coeffs: DerivedCoeffs) -> Tuple[np.ndarray, np.ndarray]:
    """Time derivatives of p(n_alpha) and p(n_beta) from the joint probabilities."""
    c = coeffs
    p = np.pad(state.values, 1)     # p[i + 1, j + 1] = rho(i, j), zero outside
    na, nb = state.grid.shape
    n = np.arange(na, dtype=np.float64)
    mb = np.arange(nb, dtype=np.float64)
    pa = state.values.sum(axis=1)
    pa_pad = np.pad(pa, 1)
    pb = state.values.sum(axis=0)
    pb_pad = np.pad(pb, 1)
    sat = 1.0 + c.delta_bar ** 2

    def gain(k):
        return c.A * k / (sat + c.b_over_a * k)

    dp_a = (gain(n) * pa_pad[:-2] - c.C1 * n * pa - gain(n + 1.0) * pa
            + c.C1 * (n + 1.0) * pa_pad[2:])
    dp_b = -c.C2 * mb * pb + c.C2 * (mb + 1.0) * pb_pad[2:]
    if c.C3 == 0:
        return dp_a, dp_b

    table = KMTable(c)
    c3sq = 2.0 * c.C3 ** 2
    N, M = np.meshgrid(n, mb, indexing="ij")
    here = p[1:-1, 1:-1]
    # bracket at (n, m): 2 p(n, m) - p(n, m - 1) - p(n - 1, m)
    bracket = 2.0 * here - p[1:-1, :-2] - p[:-2, 1:-1]
    # same bracket one alpha level up: 2 p(n+1, m) - p(n+1, m-1) - p(n, m)
    bracket_up = 2.0 * p[2:, 1:-1] - p[2:, :-2] - here
    # beta bracket one level up: 2 p(n, m+1) - p(n-1, m+1) - p(n, m)
    bracket_b_up = 2.0 * p[1:-1, 2:] - p[:-2, 2:] - here

    inv = table.inverse(N, M, (N > 0) & (M > 0))
    inv_a_up = table.inverse(N + 1.0, M, M > 0)
    inv_b_up = table.inverse(N, M + 1.0, N > 0)

    dp_a = dp_a - c3sq * n * (M * inv * bracket).sum(axis=1) \
        + c3sq * (n + 1.0) * (M * inv_a_up * bracket_up).sum(axis=1)
    dp_b = dp_b - c3sq * mb * (N * inv * bracket).sum(axis=0) \
        + c3sq * (mb + 1.0) * (N * inv_b_up * bracket_b_up).sum(axis=0)
    return dp_a, dp_b
