from dataclasses import dataclass, asdict
from typing import Dict, Optional, Tuple
import math

import numpy as np

from ..model.params import LaserParams, DerivedCoeffs, derive_coeffs, validate_params
from ..model.fock import FockGrid, DiagonalState, PhotonDistribution, suggest_grid
from ..model.steady import RecurrenceSteadySolver, SteadyResult, SteadyControls, SteadySolver
from ..model.dynamics import (
    IntegrationControls, Trajectory, build_diag_generator, build_coherence_generator,
    integrate, seed_coherence_block, fit_decay
)
from ..model.observables import (
    ObservableReport, make_report, petermann, decay_constant, linewidth, freq_shift,
    thermal_distribution, poisson_distribution
)
from .common import get_logger, count_time_usage
from .errors import NotApplicableError, ParameterError

logger = get_logger(__name__)


@dataclass
class LinewidthFit:
    nbar_alpha: float
    nbar_beta: float
    fitted_rate: float
    fitted_frequency: float
    fitted_linewidth: float
    decay_rate: float
    linewidth_2D: float
    freq_shift: float
    t_end: float

    def to_row(self) -> Dict[str, float]:
        return asdict(self)


class LaserPipeline:
    """params -> coeffs -> grid -> steady solve -> observables, plus the dynamics runs."""

    def __init__(
        self, params: LaserParams, solver: Optional[SteadySolver] = None, grid: Optional[FockGrid] = None,
        saturation: bool = True, use_analytic_nbar: bool = False, with_petermann: bool = True
    ) -> "LaserPipeline":
        self.params = validate_params(params)
        self.solver = solver or RecurrenceSteadySolver(beta_mode="auto")
        self.saturation = saturation
        self.use_analytic_nbar = use_analytic_nbar
        self.with_petermann = with_petermann
        self.coeffs = self._coeffs(self.params)
        self.grid = grid or suggest_grid(self.coeffs)

    def _coeffs(self, params: LaserParams) -> DerivedCoeffs:
        coeffs = derive_coeffs(params)
        return coeffs if self.saturation else coeffs.without_saturation()

    @count_time_usage
    def run_steady(self) -> SteadyResult:
        result = self.solver.solve(self.coeffs, self.grid)
        logger.info(
            f"{result.solver} steady state at A/C1_tilde = {self.coeffs.pump_ratio:.6g}: "
            f"nbar_alpha = {result.nbar_alpha:.10g}, nbar_beta = {result.nbar_beta:.6g}"
        )
        return result

    def petermann_factor(self) -> float:
        if not self.with_petermann:
            return math.nan
        try:
            return petermann(
                self.params, self.params.pump_rate, controls=SteadyControls(beta_mode="auto"),
                use_analytic_nbar=self.use_analytic_nbar
            )
        except NotApplicableError:
            return math.nan

    def run(self) -> Tuple[ObservableReport, SteadyResult]:
        result = self.run_steady()
        report = make_report(self.coeffs, result, self.petermann_factor(), self.use_analytic_nbar)
        return report, result

    @staticmethod
    def references(dist: PhotonDistribution) -> Dict[str, PhotonDistribution]:
        nbar = dist.mean
        return {
            "thermal": thermal_distribution(nbar, dist.n_max),
            "poisson": poisson_distribution(nbar, dist.n_max),
        }

    @count_time_usage
    def run_evolve(
        self, t_end: float, initial_n: int = 0, controls: Optional[IntegrationControls] = None
    ) -> Tuple[Trajectory, DiagonalState]:
        if t_end <= 0:
            raise ParameterError(f"t_end must be positive, got {t_end}")
        if not 0 <= initial_n <= self.grid.n_max_alpha:
            raise ParameterError(f"initial photon number {initial_n} outside grid 0..{self.grid.n_max_alpha}")
        values = np.zeros(self.grid.shape)
        values[initial_n, 0] = 1.0
        generator = build_diag_generator(self.grid, self.coeffs)
        return integrate(generator, DiagonalState(self.grid, values), t_end, controls)

    @count_time_usage
    def run_linewidth(
        self, n_samples: int = 2000, method: str = "BDF", n_max_beta: int = 1, decades: float = 8.0
    ) -> LinewidthFit:
        """
        Seeds the (1, 0) block from the steady marginals, integrates it until
        |S| has fallen by about `decades` e-folds and fits rate and frequency.
        """
        steady = self.run_steady()
        nbar = steady.nbar_alpha
        if not self.coeffs.A > self.coeffs.C1_tilde:
            raise NotApplicableError(f"linewidth fit needs a lasing state, A/C1_tilde = {self.coeffs.pump_ratio:.6g}")
        mu = decay_constant(self.coeffs, nbar, steady.nbar_beta, 1, 0)
        t_end = decades / mu.real
        grid = FockGrid(steady.grid.n_max_alpha, n_max_beta)
        block = seed_coherence_block(grid, steady.p_alpha, steady.p_beta, 1, 0)
        generator = build_coherence_generator(grid, self.coeffs, 1, 0)
        controls = IntegrationControls(method=method, n_samples=n_samples)
        trajectory, _ = integrate(generator, block, t_end, controls)
        rate, frequency = fit_decay(trajectory, 1, 0)
        fit = LinewidthFit(
            nbar_alpha=nbar, nbar_beta=steady.nbar_beta,
            fitted_rate=rate, fitted_frequency=frequency, fitted_linewidth=2.0 * rate,
            decay_rate=mu.real, linewidth_2D=linewidth(self.coeffs, nbar),
            freq_shift=freq_shift(self.coeffs, nbar), t_end=t_end
        )
        logger.info(
            f"fitted rate {rate:.6g} vs {mu.real:.6g}, frequency {frequency:.6g} vs {fit.freq_shift:.6g}"
        )
        return fit
